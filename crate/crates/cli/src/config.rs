//! Configuration file and value resolution: flags, then the config file,
//! then built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ResidualArg;

pub const OUT_DIR_ENV: &str = "ELECTROMECH_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "electromech-out";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub kerr: KerrConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(rename = "start_Hz", default)]
    pub start_hz: Option<f64>,
    #[serde(rename = "stop_Hz", default)]
    pub stop_hz: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub residual: Option<ResidualArg>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerrConfig {
    #[serde(default)]
    pub amp_start: Option<f64>,
    #[serde(default)]
    pub amp_stop: Option<f64>,
    #[serde(default)]
    pub amp_points: Option<usize>,
    #[serde(default)]
    pub probe_points: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile, String> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Output directory: flag, config file, environment, default.
pub fn out_dir(flag: Option<&Path>, config: &ConfigFile) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// First of flag and config value.
pub fn pick<T: Copy>(flag: Option<T>, config: Option<T>) -> Option<T> {
    flag.or(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_config() {
        assert_eq!(pick(Some(3), Some(4)), Some(3));
        assert_eq!(pick(None, Some(4)), Some(4));
        assert_eq!(pick::<u8>(None, None), None);
        let cfg = ConfigFile {
            out_dir: Some("from-config".into()),
            ..Default::default()
        };
        assert_eq!(out_dir(Some(Path::new("flag")), &cfg), PathBuf::from("flag"));
        assert_eq!(out_dir(None, &cfg), PathBuf::from("from-config"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"sed": 1}"#).unwrap_err();
        assert!(err.to_string().contains("sed"));
        let ok: ConfigFile = serde_json::from_str(r#"{"simulate": {"points": 11}, "fit": {"residual": "magnitude"}}"#).unwrap();
        assert_eq!(ok.simulate.points, Some(11));
        assert_eq!(ok.fit.residual, Some(ResidualArg::Magnitude));
    }
}
