//! `electromech`: derive circuit quantities, simulate and synthesize
//! reflection data, fit it, and survey mechanical modes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "electromech", version, about = "Circuit electromechanics reflection simulator and estimator")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream of the run (overrides scenario seeds).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Falls back to the config file, then
    /// $ELECTROMECH_OUT_DIR, then `electromech-out`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// JSON configuration file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resonator frequency, impedance, charging energy, Kerr coefficient and
    /// zero-point voltage from a circuit design file.
    Derive {
        /// JSON with `L_r_H`, `C_r_F` and `N_SQ`.
        design: PathBuf,
    },
    /// Closed-form reflection spectrum of a model file, written as CSV.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        start_hz: Option<f64>,
        #[arg(long)]
        stop_hz: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Synthetic data from a scenario file.
    Synth { scenario: PathBuf },
    /// Fits a model to a data file and writes the result as JSON.
    Fit {
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Initial guess (JSON, Hz).
        #[arg(long)]
        guess: Option<PathBuf>,
        /// Flux calibration for anti-crossing maps, overriding the map header.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, value_enum)]
        residual: Option<ResidualArg>,
        /// Kerr coefficient χ/2π in Hz, needed for `--model kerr`.
        #[arg(long, allow_negative_numbers = true)]
        kerr_hz: Option<f64>,
    },
    /// Fits every map (`<stem>.json` + `<stem>.csv`) in a directory and
    /// tabulates the mechanical modes.
    Survey {
        dir: PathBuf,
        /// Calibration used for every map, overriding map headers.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Mean-field Kerr shift curve of a model file.
    Kerr {
        model: PathBuf,
        /// Smallest drive amplitude in √(photons/s).
        #[arg(long)]
        amp_start: Option<f64>,
        #[arg(long)]
        amp_stop: Option<f64>,
        #[arg(long)]
        amp_points: Option<usize>,
        /// Probe frequencies per sweep direction.
        #[arg(long)]
        probe_points: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive { .. } => "derive",
            Command::Simulate { .. } => "simulate",
            Command::Synth { .. } => "synth",
            Command::Fit { .. } => "fit",
            Command::Survey { .. } => "survey",
            Command::Kerr { .. } => "kerr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bare,
    Anticrossing,
    Flux,
    Kerr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualArg {
    Complex,
    Magnitude,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(cli.command.name(), &cli.command, &cli.global, argv) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}
