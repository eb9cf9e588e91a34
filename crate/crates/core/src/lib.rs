//! Simulation and parameter extraction for microwave reflection spectroscopy
//! of a flux-tunable Kerr resonator coupled to mechanical modes.
//!
//! * [`params`]: circuit-derived quantities and flux tuning.
//! * [`spectra`]: closed-form linear reflection model.
//! * [`dynamics`]: time-domain mean-field oracle, including the Kerr term.
//! * [`fitting`]: nonlinear least-squares estimators.
//! * [`synth`]: seeded synthetic datasets.
//! * [`io`]: file formats shared with the command-line tool.
//!
//! Angular frequencies (rad/s) are used everywhere in the API; files use Hz.

pub mod error;
pub mod params;
pub mod dynamics;
pub mod fitting;
pub mod io;
pub mod spectra;
pub mod synth;

pub use error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
