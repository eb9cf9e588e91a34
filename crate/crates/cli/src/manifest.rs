use std::path::{Path, PathBuf};

use serde::Serialize;

/// Record of one run, written as `manifest.json` in the output directory.
/// Together with the listed inputs it is enough to repeat the run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub arguments: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Every value the command used after applying flags, config and defaults.
    pub resolved: serde_json::Value,
    pub seeds: Vec<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: u8,
    pub warnings: Vec<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn write(&self, dir: &Path) -> electromech::Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        electromech::io::write_atomic(&path, electromech::io::to_json_pretty(self)?.as_bytes())?;
        Ok(path)
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
