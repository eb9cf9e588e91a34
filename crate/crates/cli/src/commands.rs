use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use electromech::dynamics::{kerr_shift_curve, ProbeScan};
use electromech::fitting::lm::LmOptions;
use electromech::fitting::{
    fit_anticrossing_with, fit_bare_resonator_with, fit_flux_calibration, fit_kerr_calibration, mode_survey_with,
    AnticrossingGuess, AnticrossingMap, BareFitOptions, FitResult, ResidualKind,
};
use electromech::io::{
    flux_points_from_csv, kerr_from_csv, kerr_to_csv, map_header, read_map, spectrum_from_csv, spectrum_to_csv,
    to_json_pretty, write_atomic, write_map, CalibrationFile, FitResultFile, ModelFile, ResonatorFile,
};
use electromech::params::{
    impedance, kerr_anharmonicity, resonator_frequency, zero_point_voltage, CircuitDesign, FluxCalibration, PLANCK,
};
use electromech::spectra::{evaluate_spectrum, linear_grid, ResonatorParams, SystemModel};
use electromech::synth::{
    generate_anticrossing_map, generate_kerr_sweep, generate_mode_cluster, generate_spectrum, mode_maps,
    AmplitudeSpec, MapLayout, NoiseSpec, Scenario,
};
use electromech::{Error, TWO_PI};

use crate::config::{self, pick, ConfigFile};
use crate::manifest::{timestamp, RunManifest};
use crate::{Command, GlobalArgs, ModelKind, ResidualArg};

pub const SURVEY_HEADER: &str =
    "source,frequency_Hz,gamma_Hz,g_Hz,kappa_Hz,frequency_std_Hz,gamma_std_Hz,g_std_Hz,Q_m,cooperativity,converged";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn usage(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn data(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Estimator errors: only a rejected guess or coefficient is the user's
/// fault, everything else is a property of the data.
fn fit_error(e: Error) -> CliError {
    match e {
        Error::InvalidParameter { .. } => CliError::Usage(format!("fit: {e}")),
        _ => CliError::Data(format!("fit: {e}")),
    }
}

/// Library errors during a computation: anything the user specified wrongly
/// is a usage error, the rest is down to the data.
fn classify(context: &str, e: Error) -> CliError {
    let msg = format!("{context}: {e}");
    match e {
        Error::InvalidParameter { .. } | Error::InvalidModel(_) | Error::InvalidGrid(_) => CliError::Usage(msg),
        _ => CliError::Data(msg),
    }
}

/// Design, model, scenario, guess and calibration files: problems with them
/// are usage errors, and serde names the offending field.
fn load_spec<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_data(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct Ctx {
    out_dir: PathBuf,
    seed: Option<u64>,
    cfg: ConfigFile,
}

#[derive(Default)]
struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    resolved: serde_json::Value,
    seeds: Vec<u64>,
    warnings: Vec<String>,
    not_converged: bool,
}

impl Run {
    fn input(&mut self, path: &Path) {
        self.inputs.push(fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()));
    }
}

impl Ctx {
    fn ensure_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", self.out_dir.display())))
    }

    fn write(&self, run: &mut Run, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        self.ensure_dir()?;
        let path = self.out_dir.join(name);
        write_atomic(&path, contents.as_bytes()).map_err(data(&path))?;
        run.outputs.push(path.clone());
        Ok(path)
    }
}

pub fn run(name: &str, command: &Command, global: &GlobalArgs, argv: Vec<String>) -> Result<u8, CliError> {
    let started_at = timestamp();
    let cfg = config::load(global.config.as_deref()).map_err(CliError::Usage)?;
    let ctx = Ctx {
        out_dir: config::out_dir(global.out_dir.as_deref(), &cfg),
        seed: pick(global.seed, cfg.seed),
        cfg,
    };
    let run = match command {
        Command::Derive { design } => derive(&ctx, design)?,
        Command::Simulate {
            model,
            start_hz,
            stop_hz,
            points,
        } => simulate(&ctx, model, *start_hz, *stop_hz, *points)?,
        Command::Synth { scenario } => synth(&ctx, scenario)?,
        Command::Fit {
            data,
            model,
            guess,
            calibration,
            residual,
            kerr_hz,
        } => fit(&ctx, data, *model, guess.as_deref(), calibration.as_deref(), *residual, *kerr_hz)?,
        Command::Survey { dir, calibration } => survey(&ctx, dir, calibration.as_deref())?,
        Command::Kerr {
            model,
            amp_start,
            amp_stop,
            amp_points,
            probe_points,
        } => kerr(&ctx, model, [*amp_start, *amp_stop], *amp_points, *probe_points)?,
    };

    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let exit_code = if run.not_converged { 3 } else { 0 };
    ctx.ensure_dir()?;
    let outputs = run
        .outputs
        .iter()
        .map(|p| fs::canonicalize(p).unwrap_or_else(|_| p.clone()))
        .collect();
    let manifest = RunManifest {
        command: name.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        arguments: argv,
        inputs: run.inputs,
        outputs,
        resolved: json!({
            "out_dir": ctx.out_dir,
            "seed": ctx.seed,
            "config_file": global.config,
            "config": ctx.cfg,
            "command": run.resolved,
        }),
        seeds: run.seeds,
        started_at,
        finished_at: timestamp(),
        exit_code,
        warnings: run.warnings,
    };
    manifest.write(&ctx.out_dir).map_err(data(&ctx.out_dir))?;
    Ok(exit_code)
}

#[derive(Debug, Serialize)]
struct DerivedReport {
    design: CircuitDesign,
    #[serde(rename = "frequency_Hz")]
    frequency_hz: f64,
    #[serde(rename = "impedance_Ohm")]
    impedance_ohm: f64,
    /// `E_C / h`
    #[serde(rename = "charging_energy_Hz")]
    charging_energy_hz: f64,
    /// `χ / 2π`
    #[serde(rename = "kerr_Hz")]
    kerr_hz: f64,
    #[serde(rename = "zero_point_voltage_V")]
    zero_point_voltage_v: f64,
}

fn derive(ctx: &Ctx, path: &Path) -> Result<Run, CliError> {
    let mut run = Run::default();
    run.input(path);
    let design: CircuitDesign = load_spec(path)?;
    design.validate().map_err(usage(path))?;
    let omega_r = resonator_frequency(&design);
    let report = DerivedReport {
        design,
        frequency_hz: omega_r / TWO_PI,
        impedance_ohm: impedance(&design),
        charging_energy_hz: design.charging_energy() / PLANCK,
        kerr_hz: kerr_anharmonicity(&design) / TWO_PI,
        zero_point_voltage_v: zero_point_voltage(omega_r, design.capacitance),
    };
    println!("omega_r/2pi  {:.6} GHz", report.frequency_hz / 1e9);
    println!("Z_r          {:.2} Ohm", report.impedance_ohm);
    println!("E_C/h        {:.3} MHz", report.charging_energy_hz / 1e6);
    println!("chi/2pi      {:.4} MHz", report.kerr_hz / 1e6);
    println!("V_zp         {:.4} uV", report.zero_point_voltage_v * 1e6);
    let text = to_json_pretty(&report).map_err(data(path))?;
    ctx.write(&mut run, "derived.json", &text)?;
    run.resolved = json!({ "design": path });
    Ok(run)
}

/// Covers the resonator and every mode with five resonator linewidths spare.
fn default_band_hz(model: &SystemModel) -> (f64, f64) {
    let r = &model.resonator;
    let (lo, hi) = model
        .modes()
        .iter()
        .fold((r.frequency, r.frequency), |(a, b), m| (a.min(m.frequency), b.max(m.frequency)));
    ((lo - 5.0 * r.linewidth) / TWO_PI, (hi + 5.0 * r.linewidth) / TWO_PI)
}

fn simulate(
    ctx: &Ctx,
    path: &Path,
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<usize>,
) -> Result<Run, CliError> {
    let mut run = Run::default();
    run.input(path);
    let file: ModelFile = load_spec(path)?;
    let model = file.to_model().map_err(usage(path))?;
    let (lo, hi) = default_band_hz(&model);
    let sim = &ctx.cfg.simulate;
    let start = pick(start, sim.start_hz).unwrap_or(lo);
    let stop = pick(stop, sim.stop_hz).unwrap_or(hi);
    let points = pick(points, sim.points).unwrap_or(1001);
    if points < 2 || !(stop > start) {
        return Err(CliError::Usage(format!(
            "grid flags: need --start-hz < --stop-hz and --points >= 2 (got {start}, {stop}, {points})"
        )));
    }
    let grid = linear_grid(start, stop, points).map_err(|e| CliError::Usage(format!("grid flags: {e}")))?;
    if model.kerr != 0.0 {
        run.warnings
            .push("simulate evaluates the linear response; the Kerr term is ignored (use `kerr`)".into());
    }
    let spectrum = evaluate_spectrum(&model, &grid).map_err(|e| classify("simulate", e))?;
    let out = ctx.write(&mut run, "spectrum.csv", &spectrum_to_csv(&spectrum))?;
    println!("wrote {} points to {}", spectrum.len(), out.display());
    run.resolved = json!({ "model": path, "start_Hz": start, "stop_Hz": stop, "points": points });
    Ok(run)
}

fn override_seed(noise: &mut Option<NoiseSpec>, seed: Option<u64>, run: &mut Run) {
    if let Some(n) = noise.as_mut() {
        if let Some(s) = seed {
            n.seed = s;
        }
        run.seeds.push(n.seed);
    }
}

fn synth(ctx: &Ctx, path: &Path) -> Result<Run, CliError> {
    let mut run = Run::default();
    run.input(path);
    let scenario: Scenario = load_spec(path)?;
    let resolved = match scenario {
        Scenario::Spectrum(mut s) => {
            override_seed(&mut s.noise, ctx.seed, &mut run);
            let spectrum = generate_spectrum(&s).map_err(|e| classify("synth", e))?;
            ctx.write(&mut run, "spectrum.csv", &spectrum_to_csv(&spectrum))?;
            Scenario::Spectrum(s)
        }
        Scenario::AnticrossingMap(mut s) => {
            override_seed(&mut s.noise, ctx.seed, &mut run);
            let cal = s
                .calibration
                .ok_or_else(|| CliError::Usage(format!("{}: missing field `calibration`", path.display())))?
                .to_calibration()
                .map_err(usage(path))?;
            let out = generate_anticrossing_map(&s, &cal).map_err(|e| classify("synth", e))?;
            ctx.ensure_dir()?;
            let header = map_header(&out.map, Some(&cal), &out.warnings);
            let (json_path, csv_path) = write_map(&ctx.out_dir, "map", &out.map, &header).map_err(data(&ctx.out_dir))?;
            run.outputs.extend([json_path, csv_path]);
            run.warnings.extend(out.warnings);
            Scenario::AnticrossingMap(s)
        }
        Scenario::ModeCluster(mut c) => {
            let seed = ctx.seed.or(c.noise.map(|n| n.seed)).unwrap_or(0);
            if let Some(n) = c.noise.as_mut() {
                n.seed = seed;
            }
            run.seeds.push(seed);
            let cal = c.calibration.to_calibration().map_err(usage(path))?;
            let resonator = c.resonator().map_err(usage(path))?;
            let band = (TWO_PI * c.band_hz[0], TWO_PI * c.band_hz[1]);
            let model = generate_mode_cluster(c.count, band, &c.statistics(seed), resonator)
                .map_err(|e| classify("synth", e))?;
            let layout = MapLayout {
                rows: c.map_rows,
                cols: c.map_points,
                ..Default::default()
            };
            let maps = mode_maps(&model, &cal, &layout, c.noise).map_err(|e| classify("synth", e))?;
            ctx.ensure_dir()?;
            for (k, m) in maps.iter().enumerate() {
                let header = map_header(&m.map, Some(&cal), &m.warnings);
                let (j, v) = write_map(&ctx.out_dir, &format!("mode_{k:03}"), &m.map, &header)
                    .map_err(data(&ctx.out_dir))?;
                run.outputs.extend([j, v]);
                run.warnings.extend(m.warnings.iter().map(|w| format!("mode_{k:03}: {w}")));
            }
            let truth = to_json_pretty(&ModelFile::from_model(&model)).map_err(data(path))?;
            ctx.write(&mut run, "cluster_model.json", &truth)?;
            Scenario::ModeCluster(c)
        }
        Scenario::KerrSweep(mut k) => {
            override_seed(&mut k.noise, ctx.seed, &mut run);
            let model = k.model.to_model().map_err(usage(path))?;
            let amps = k.amplitudes.build().map_err(usage(path))?;
            let points =
                generate_kerr_sweep(&model, &amps, k.noise, &ProbeScan::default()).map_err(|e| classify("synth", e))?;
            flag_unconverged(&points, &mut run);
            ctx.write(&mut run, "kerr.csv", &kerr_to_csv(&points))?;
            Scenario::KerrSweep(k)
        }
    };
    println!("wrote {} files to {}", run.outputs.len(), ctx.out_dir.display());
    run.resolved = serde_json::to_value(&resolved).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(run)
}

fn flag_unconverged(points: &[electromech::dynamics::KerrPoint], run: &mut Run) {
    let bad = points.iter().filter(|p| !p.converged).count();
    if bad > 0 {
        run.warnings
            .push(format!("{bad} of {} points did not reach a steady state", points.len()));
        run.not_converged = true;
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnticrossingGuessFile {
    #[serde(rename = "omega_m_Hz")]
    omega_m_hz: f64,
    #[serde(rename = "gamma_Hz")]
    gamma_hz: f64,
    #[serde(rename = "g_Hz")]
    g_hz: f64,
    #[serde(rename = "kappa_Hz")]
    kappa_hz: f64,
    #[serde(rename = "kappa_e_Hz")]
    kappa_e_hz: f64,
}

fn load_calibration(path: &Path) -> Result<FluxCalibration, CliError> {
    load_spec::<CalibrationFile>(path)?.to_calibration().map_err(usage(path))
}

#[allow(clippy::too_many_arguments)]
fn fit(
    ctx: &Ctx,
    path: &Path,
    kind: ModelKind,
    guess: Option<&Path>,
    calibration: Option<&Path>,
    residual: Option<ResidualArg>,
    kerr_hz: Option<f64>,
) -> Result<Run, CliError> {
    let mut run = Run::default();
    run.input(path);
    for p in guess.iter().chain(calibration.iter()) {
        run.input(p);
    }
    let residual = pick(residual, ctx.cfg.fit.residual).unwrap_or(ResidualArg::Complex);
    let residual_kind = match residual {
        ResidualArg::Complex => ResidualKind::Complex,
        ResidualArg::Magnitude => ResidualKind::Magnitude,
    };
    let unsupported = |what: &str| CliError::Usage(format!("{what} is not supported for this model kind"));
    let fitted: FitResult = match kind {
        ModelKind::Bare => {
            let spectrum = spectrum_from_csv(&read_data(path)?).map_err(data(path))?;
            let guess = match guess {
                Some(g) => {
                    let r: ResonatorFile = load_spec(g)?;
                    Some(
                        ResonatorParams::new(TWO_PI * r.frequency_hz, TWO_PI * r.kappa_hz, TWO_PI * r.kappa_e_hz)
                            .map_err(usage(g))?,
                    )
                }
                None => None,
            };
            let opts = BareFitOptions {
                residual: residual_kind,
                ..Default::default()
            };
            fit_bare_resonator_with(&spectrum, guess, &opts).map_err(fit_error)?
        }
        ModelKind::Anticrossing => {
            let (map, header) = read_map(path).map_err(data(path))?;
            let cal = match calibration {
                Some(c) => load_calibration(c)?,
                None => header
                    .calibration
                    .ok_or_else(|| CliError::Usage("map has no calibration; pass --calibration".into()))?
                    .to_calibration()
                    .map_err(data(path))?,
            };
            let guess = match guess {
                Some(g) => {
                    let f: AnticrossingGuessFile = load_spec(g)?;
                    Some(AnticrossingGuess {
                        omega_m: TWO_PI * f.omega_m_hz,
                        gamma: TWO_PI * f.gamma_hz,
                        g: TWO_PI * f.g_hz,
                        kappa: TWO_PI * f.kappa_hz,
                        kappa_e: TWO_PI * f.kappa_e_hz,
                    })
                }
                None => None,
            };
            fit_anticrossing_with(&map, &cal, guess, residual_kind, &LmOptions::default())
                .map_err(fit_error)?
        }
        ModelKind::Flux => {
            if guess.is_some() {
                return Err(unsupported("--guess"));
            }
            let points = flux_points_from_csv(&read_data(path)?).map_err(data(path))?;
            fit_flux_calibration(&points).map_err(fit_error)?
        }
        ModelKind::Kerr => {
            if guess.is_some() {
                return Err(unsupported("--guess"));
            }
            let chi = kerr_hz.ok_or_else(|| CliError::Usage("--kerr-hz is required for --model kerr".into()))?;
            let points = kerr_from_csv(&read_data(path)?).map_err(data(path))?;
            let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.power(), p.shift)).collect();
            fit_kerr_calibration(&pairs, TWO_PI * chi).map_err(fit_error)?
        }
    };
    let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let file = FitResultFile::new(&name, &fitted);
    for p in &file.parameters {
        println!("{:<24} {:.10e} ± {:.3e} {}", p.name, p.value, p.std_error, p.unit);
    }
    run.warnings.extend(fitted.diagnostics.warnings.iter().cloned());
    if !fitted.converged {
        run.not_converged = true;
        run.warnings.push(format!(
            "fit did not converge ({}; gradient measure {:.2e}; non-identifiable: [{}])",
            fitted.diagnostics.termination,
            fitted.diagnostics.gradient_measure,
            fitted.diagnostics.non_identifiable.join(", ")
        ));
    }
    let text = to_json_pretty(&file).map_err(data(path))?;
    ctx.write(&mut run, "fit.json", &text)?;
    run.resolved = json!({
        "data": path,
        "model": kind,
        "guess": guess,
        "calibration": calibration,
        "residual": residual,
        "kerr_Hz": kerr_hz,
    });
    Ok(run)
}

/// Map headers in `dir` that have a `.csv` payload next to them, sorted.
fn map_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.with_extension("csv").is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn survey(ctx: &Ctx, dir: &Path, calibration: Option<&Path>) -> Result<Run, CliError> {
    let mut run = Run::default();
    run.input(dir);
    let cal_override = match calibration {
        Some(c) => {
            run.input(c);
            Some(load_calibration(c)?)
        }
        None => None,
    };
    let files = map_files(dir)?;
    let source = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();

    let mut loaded: Vec<(PathBuf, AnticrossingMap, FluxCalibration)> = Vec::new();
    for path in &files {
        let cal_and_map = read_map(path).map_err(|e| e.to_string()).and_then(|(map, header)| {
            let cal = match (cal_override, header.calibration) {
                (Some(c), _) => Ok(c),
                (None, Some(c)) => c.to_calibration().map_err(|e| e.to_string()),
                (None, None) => Err("no calibration in the header and none given".to_string()),
            }?;
            Ok((map, cal))
        });
        match cal_and_map {
            Ok((map, cal)) => loaded.push((path.clone(), map, cal)),
            Err(msg) => run.warnings.push(format!("{}: {msg}", source(path))),
        }
    }
    let items: Vec<(&AnticrossingMap, &FluxCalibration)> = loaded.iter().map(|(_, m, c)| (m, c)).collect();
    let result = mode_survey_with(&items);
    for f in &result.failures {
        run.warnings.push(format!("{}: {}", source(&loaded[f.index].0), f.message));
    }

    let mut csv = String::from(SURVEY_HEADER);
    csv.push('\n');
    for row in &result.rows {
        let hz = |name: &str| row.fit.std_error(name) / TWO_PI;
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            source(&loaded[row.index].0),
            row.omega_m / TWO_PI,
            row.gamma / TWO_PI,
            row.g / TWO_PI,
            row.kappa / TWO_PI,
            hz("omega_m"),
            hz("gamma"),
            hz("g"),
            row.quality_factor,
            row.cooperativity,
            u8::from(row.fit.converged),
        ));
    }
    ctx.write(&mut run, "survey.csv", &csv)?;
    println!(
        "surveyed {} maps: {} modes, {} warnings",
        files.len(),
        result.rows.len(),
        run.warnings.len()
    );
    run.resolved = json!({ "dir": dir, "calibration": calibration, "maps": files });
    Ok(run)
}

fn kerr(
    ctx: &Ctx,
    path: &Path,
    amp: [Option<f64>; 2],
    points: Option<usize>,
    probe_points: Option<usize>,
) -> Result<Run, CliError> {
    let mut run = Run::default();
    run.input(path);
    let file: ModelFile = load_spec(path)?;
    let model = file.to_model().map_err(usage(path))?;
    let r = &model.resonator;
    // Default sweep reaches |χ| n ≈ 2κ on resonance (one photon without Kerr).
    let per_power = 4.0 * r.external_linewidth / (r.linewidth * r.linewidth);
    let n_max = if model.kerr != 0.0 { 2.0 * r.linewidth / model.kerr.abs() } else { 1.0 };
    let k = &ctx.cfg.kerr;
    let spec = AmplitudeSpec {
        start: pick(amp[0], k.amp_start).unwrap_or(0.0),
        stop: pick(amp[1], k.amp_stop).unwrap_or((n_max / per_power).sqrt()),
        points: pick(points, k.amp_points).unwrap_or(21),
    };
    let amps = spec.build().map_err(|e| CliError::Usage(format!("amplitude flags: {e}")))?;
    let probe = ProbeScan {
        points: pick(probe_points, k.probe_points).unwrap_or(ProbeScan::default().points),
        ..ProbeScan::default()
    };
    if probe.points < 3 {
        return Err(CliError::Usage("--probe-points must be at least 3".into()));
    }
    let curve = kerr_shift_curve(&model, &probe, &amps).map_err(|e| classify("kerr", e))?;
    flag_unconverged(&curve, &mut run);
    let out = ctx.write(&mut run, "kerr.csv", &kerr_to_csv(&curve))?;
    let bistable = curve.iter().filter(|p| p.bistable).count();
    println!("wrote {} points ({bistable} bistable) to {}", curve.len(), out.display());
    run.resolved = json!({
        "model": path,
        "amp_start": spec.start,
        "amp_stop": spec.stop,
        "amp_points": spec.points,
        "probe_points": probe.points,
    });
    Ok(run)
}
