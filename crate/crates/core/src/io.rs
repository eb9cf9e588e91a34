//! File formats shared by the library and the command-line tool. Frequencies
//! and rates are stored in Hz; values are printed with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::KerrPoint;
use crate::error::{Error, Result};
use crate::fitting::{AnticrossingMap, FitResult, FluxUnits, ParamUnit};
use crate::params::FluxCalibration;
use crate::spectra::{MechanicalMode, ResonatorParams, Spectrum, SystemModel};
use crate::TWO_PI;

pub const SPECTRUM_HEADER: &str = "frequency_Hz,re_s11,im_s11";
pub const MAP_HEADER: &str = "flux_index,frequency_Hz,re_s11,im_s11";
pub const KERR_HEADER: &str = "drive_amplitude,occupation_n_r,shift_Hz,bistable_flag";
pub const FLUX_HEADER: &str = "bias_V,frequency_Hz";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorFile {
    #[serde(rename = "frequency_Hz")]
    pub frequency_hz: f64,
    #[serde(rename = "kappa_Hz")]
    pub kappa_hz: f64,
    #[serde(rename = "kappa_e_Hz")]
    pub kappa_e_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFile {
    #[serde(rename = "frequency_Hz")]
    pub frequency_hz: f64,
    #[serde(rename = "gamma_Hz")]
    pub gamma_hz: f64,
    #[serde(rename = "g_Hz")]
    pub g_hz: f64,
}

/// [`SystemModel`] as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub resonator: ResonatorFile,
    #[serde(default)]
    pub modes: Vec<ModeFile>,
    #[serde(rename = "kerr_Hz", default)]
    pub kerr_hz: f64,
}

impl ModelFile {
    pub fn to_model(&self) -> Result<SystemModel> {
        let r = &self.resonator;
        let resonator = ResonatorParams::new(TWO_PI * r.frequency_hz, TWO_PI * r.kappa_hz, TWO_PI * r.kappa_e_hz)?;
        let modes = self
            .modes
            .iter()
            .map(|m| MechanicalMode::new(TWO_PI * m.frequency_hz, TWO_PI * m.gamma_hz, TWO_PI * m.g_hz))
            .collect::<Result<Vec<_>>>()?;
        SystemModel::new(resonator, modes, TWO_PI * self.kerr_hz)
    }

    pub fn from_model(model: &SystemModel) -> Self {
        let r = &model.resonator;
        Self {
            resonator: ResonatorFile {
                frequency_hz: r.frequency / TWO_PI,
                kappa_hz: r.linewidth / TWO_PI,
                kappa_e_hz: r.external_linewidth / TWO_PI,
            },
            modes: model
                .modes()
                .iter()
                .map(|m| ModeFile {
                    frequency_hz: m.frequency / TWO_PI,
                    gamma_hz: m.linewidth / TWO_PI,
                    g_hz: m.coupling / TWO_PI,
                })
                .collect(),
            kerr_hz: model.kerr / TWO_PI,
        }
    }
}

/// [`FluxCalibration`] as stored on disk; `omega_max_Hz` is an ordinary
/// frequency despite its name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    #[serde(rename = "omega_max_Hz")]
    pub omega_max_hz: f64,
    #[serde(rename = "G_rad_per_V")]
    pub gain_rad_per_v: f64,
    pub phi_offset_rad: f64,
}

impl CalibrationFile {
    pub fn to_calibration(&self) -> Result<FluxCalibration> {
        FluxCalibration::new(TWO_PI * self.omega_max_hz, self.gain_rad_per_v, self.phi_offset_rad)
    }

    pub fn from_calibration(cal: &FluxCalibration) -> Self {
        Self {
            omega_max_hz: cal.max_frequency / TWO_PI,
            gain_rad_per_v: cal.gain,
            phi_offset_rad: cal.offset,
        }
    }
}

fn num(x: f64) -> String {
    // No negative zero in files.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

pub fn spectrum_to_csv(spectrum: &Spectrum) -> String {
    let mut out = String::with_capacity(64 * (spectrum.len() + 1));
    out.push_str(SPECTRUM_HEADER);
    out.push('\n');
    for (f, z) in spectrum.frequencies().iter().zip(spectrum.s11()) {
        out.push_str(&format!("{},{},{}\n", num(*f), num(z.re), num(z.im)));
    }
    out
}

/// Data lines of a CSV document after checking the header row.
fn csv_rows<'a>(text: &'a str, header: &str, columns: usize) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => return Err(Error::Format(format!("expected header `{header}`, found `{}`", h.trim()))),
        None => return Err(Error::Format("empty file".into())),
    }
    lines
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != columns {
                return Err(Error::Format(format!(
                    "line {}: expected {columns} fields, found {}",
                    i + 1,
                    fields.len()
                )));
            }
            Ok((i + 1, fields))
        })
        .collect()
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: `{field}` is not a number")))
}

pub fn spectrum_from_csv(text: &str) -> Result<Spectrum> {
    let rows = csv_rows(text, SPECTRUM_HEADER, 3)?;
    let mut freqs = Vec::with_capacity(rows.len());
    let mut s11 = Vec::with_capacity(rows.len());
    for (line, f) in rows {
        freqs.push(parse_f64(f[0], line)?);
        s11.push(Complex64::new(parse_f64(f[1], line)?, parse_f64(f[2], line)?));
    }
    Spectrum::new(freqs, s11)
}

/// JSON header of a map file pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapHeader {
    pub flux_axis: Vec<f64>,
    #[serde(rename = "frequency_axis")]
    pub frequency_axis_hz: Vec<f64>,
    pub units: FluxUnits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn map_header(map: &AnticrossingMap, cal: Option<&FluxCalibration>, warnings: &[String]) -> MapHeader {
    MapHeader {
        flux_axis: map.flux_axis().to_vec(),
        frequency_axis_hz: map.frequency_axis().to_vec(),
        units: map.units(),
        calibration: cal.map(CalibrationFile::from_calibration),
        warnings: warnings.to_vec(),
    }
}

pub fn map_to_csv(map: &AnticrossingMap) -> String {
    let mut out = String::with_capacity(80 * (map.s11().len() + 1));
    out.push_str(MAP_HEADER);
    out.push('\n');
    for r in 0..map.rows() {
        for (f, z) in map.frequency_axis().iter().zip(map.row(r)) {
            out.push_str(&format!("{r},{},{},{}\n", num(*f), num(z.re), num(z.im)));
        }
    }
    out
}

/// Rebuilds a map from its header and CSV payload. Rows must appear in
/// `flux_index` order with frequencies matching the header axis.
pub fn map_from_parts(header: &MapHeader, csv: &str) -> Result<AnticrossingMap> {
    let rows = csv_rows(csv, MAP_HEADER, 4)?;
    let cols = header.frequency_axis_hz.len();
    let expected = header.flux_axis.len() * cols;
    if rows.len() != expected {
        return Err(Error::Format(format!("expected {expected} data rows, found {}", rows.len())));
    }
    let mut s11 = Vec::with_capacity(expected);
    for (k, (line, f)) in rows.into_iter().enumerate() {
        let index: usize = f[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: bad flux_index `{}`", f[0])))?;
        if index != k / cols {
            return Err(Error::Format(format!("line {line}: flux_index {index} out of order")));
        }
        let freq = parse_f64(f[1], line)?;
        let want = header.frequency_axis_hz[k % cols];
        if (freq - want).abs() > 1e-12 * want.abs() {
            return Err(Error::Format(format!("line {line}: frequency {freq} does not match header axis {want}")));
        }
        s11.push(Complex64::new(parse_f64(f[2], line)?, parse_f64(f[3], line)?));
    }
    AnticrossingMap::new(header.flux_axis.clone(), header.units, header.frequency_axis_hz.clone(), s11)
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.csv`; returns both paths.
pub fn write_map(dir: &Path, stem: &str, map: &AnticrossingMap, header: &MapHeader) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    write_atomic(&csv, map_to_csv(map).as_bytes())?;
    write_atomic(&json, to_json_pretty(header)?.as_bytes())?;
    Ok((json, csv))
}

/// Reads a map from its JSON header; the payload is the `.csv` file with the
/// same stem.
pub fn read_map(json_path: &Path) -> Result<(AnticrossingMap, MapHeader)> {
    let header: MapHeader = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    let csv = fs::read_to_string(json_path.with_extension("csv"))?;
    let map = map_from_parts(&header, &csv)?;
    Ok((map, header))
}

pub fn kerr_to_csv(points: &[KerrPoint]) -> String {
    let mut out = String::from(KERR_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            num(p.amplitude),
            num(p.occupation),
            num(p.shift / TWO_PI),
            u8::from(p.bistable)
        ));
    }
    out
}

/// Parses a Kerr-curve CSV. The file does not record solver convergence, so
/// every point comes back with `converged = true`.
pub fn kerr_from_csv(text: &str) -> Result<Vec<KerrPoint>> {
    csv_rows(text, KERR_HEADER, 4)?
        .into_iter()
        .map(|(line, f)| {
            let bistable = match f[3] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Format(format!("line {line}: bistable_flag `{other}` is not 0 or 1"))),
            };
            Ok(KerrPoint {
                amplitude: parse_f64(f[0], line)?,
                occupation: parse_f64(f[1], line)?,
                shift: TWO_PI * parse_f64(f[2], line)?,
                bistable,
                converged: true,
            })
        })
        .collect()
}

/// Bias/frequency pairs for calibration fits; `(V, ω)` with ω in rad/s.
pub fn flux_points_to_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from(FLUX_HEADER);
    out.push('\n');
    for (v, w) in points {
        out.push_str(&format!("{},{}\n", num(*v), num(w / TWO_PI)));
    }
    out
}

pub fn flux_points_from_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    csv_rows(text, FLUX_HEADER, 2)?
        .into_iter()
        .map(|(line, f)| Ok((parse_f64(f[0], line)?, TWO_PI * parse_f64(f[1], line)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameterFile {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnosticsFile {
    pub termination: String,
    pub gradient_measure: f64,
    pub residual_count: usize,
    pub non_identifiable: Vec<String>,
    pub warnings: Vec<String>,
}

/// [`FitResult`] as written to disk, with angular frequencies converted to
/// Hz (including the covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResultFile {
    pub model: String,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    pub parameters: Vec<FitParameterFile>,
    pub covariance: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnosticsFile,
}

impl FitResultFile {
    pub fn new(model: &str, fit: &FitResult) -> Self {
        let factor = |u: ParamUnit| if u == ParamUnit::AngularFrequency { 1.0 / TWO_PI } else { 1.0 };
        let unit = |u: ParamUnit| match u {
            ParamUnit::AngularFrequency => "Hz",
            ParamUnit::RadiansPerVolt => "rad/V",
            ParamUnit::Radians => "rad",
            ParamUnit::Dimensionless => "1",
            ParamUnit::PhotonsPerPower => "photons per unit power",
        };
        let f: Vec<f64> = fit.parameters.iter().map(|p| factor(p.unit)).collect();
        Self {
            model: model.to_string(),
            converged: fit.converged,
            residual_norm: fit.residual_norm,
            iterations: fit.iterations,
            parameters: fit
                .parameters
                .iter()
                .map(|p| FitParameterFile {
                    name: p.name.to_string(),
                    value: p.value * factor(p.unit),
                    std_error: p.std_error * factor(p.unit),
                    unit: unit(p.unit).to_string(),
                })
                .collect(),
            covariance: fit
                .covariance
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().enumerate().map(|(j, c)| c * f[i] * f[j]).collect())
                .collect(),
            diagnostics: FitDiagnosticsFile {
                termination: fit.diagnostics.termination.clone(),
                gradient_measure: fit.diagnostics.gradient_measure,
                residual_count: fit.diagnostics.residual_count,
                non_identifiable: fit.diagnostics.non_identifiable.clone(),
                warnings: fit.diagnostics.warnings.clone(),
            },
        }
    }

    pub fn parameter(&self, name: &str) -> Option<&FitParameterFile> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{evaluate_spectrum, linear_grid};

    #[test]
    fn flux_points_round_trip() {
        let pts = vec![(0.1, TWO_PI * 8.0e9), (0.25, TWO_PI * 7.5e9)];
        let text = flux_points_to_csv(&pts);
        assert!(text.starts_with("bias_V,frequency_Hz\n"));
        let back = flux_points_from_csv(&text).unwrap();
        for (a, b) in back.iter().zip(&pts) {
            assert_eq!(a.0, b.0);
            assert!((a.1 / b.1 - 1.0).abs() < 1e-15);
        }
        assert!(flux_points_from_csv("bias_V,frequency_Hz\n0.1\n").is_err());
    }

    #[test]
    fn spectrum_csv_round_trip_is_exact() {
        let r = ResonatorParams::new(TWO_PI * 5.9e9, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap();
        let s = evaluate_spectrum(&SystemModel::bare(r), &linear_grid(5.88e9, 5.92e9, 17).unwrap()).unwrap();
        let text = spectrum_to_csv(&s);
        assert!(text.starts_with("frequency_Hz,re_s11,im_s11\n"));
        assert_eq!(spectrum_from_csv(&text).unwrap(), s);
    }

    #[test]
    fn csv_format_is_fixed() {
        let s = Spectrum::new(vec![5.9e9], vec![Complex64::new(-0.5, 0.25)]).unwrap();
        assert_eq!(
            spectrum_to_csv(&s),
            "frequency_Hz,re_s11,im_s11\n5.9000000000000000e9,-5.0000000000000000e-1,2.5000000000000000e-1\n"
        );
    }

    #[test]
    fn bad_csv_is_format_error() {
        assert!(matches!(spectrum_from_csv("f,re,im\n1,2,3\n"), Err(Error::Format(_))));
        assert!(matches!(
            spectrum_from_csv("frequency_Hz,re_s11,im_s11\n1,2\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            spectrum_from_csv("frequency_Hz,re_s11,im_s11\n1,x,3\n"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let text = r#"{"resonator":{"frequency_Hz":5.9e9,"kappa_Hz":1.1e7,"kappa_e_Hz":6.3e6},
                       "modes":[{"frequency_Hz":5.9754e9,"gamma_Hz":2.2e5,"g_Hz":1.65e6}],"kerr_Hz":-2e6}"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        let model = file.to_model().unwrap();
        assert!((model.modes()[0].coupling - TWO_PI * 1.65e6).abs() < 1e-6);
        let back = ModelFile::from_model(&model);
        assert!((back.modes[0].g_hz - 1.65e6).abs() < 1e-6);
        assert!(serde_json::from_str::<ModelFile>(r#"{"resonator":{"frequency_Hz":1,"kappa_Hz":1}}"#).is_err());
    }

    #[test]
    fn map_round_trip_and_order_check() {
        let s11: Vec<Complex64> = (0..6).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
        let map = AnticrossingMap::new(vec![0.1, 0.2], FluxUnits::Volts, vec![1e9, 2e9, 3e9], s11).unwrap();
        let header = map_header(&map, None, &[]);
        let csv = map_to_csv(&map);
        assert_eq!(map_from_parts(&header, &csv).unwrap(), map);
        let swapped = csv.replacen("\n0,", "\n1,", 1);
        assert!(map_from_parts(&header, &swapped).is_err());
    }

    #[test]
    fn kerr_csv_round_trip() {
        let pts = vec![
            KerrPoint { amplitude: 0.0, occupation: 0.0, shift: 0.0, bistable: false, converged: true },
            KerrPoint { amplitude: 10.0, occupation: 3.5, shift: -TWO_PI * 1e6, bistable: true, converged: true },
        ];
        let text = kerr_to_csv(&pts);
        assert!(text.ends_with(",1\n"));
        let back = kerr_from_csv(&text).unwrap();
        assert_eq!(back[1].bistable, true);
        assert!((back[1].shift - pts[1].shift).abs() < 1e-6);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
