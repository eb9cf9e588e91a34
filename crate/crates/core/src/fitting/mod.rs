//! Nonlinear least-squares parameter extraction.
//!
//! Every estimator minimises stacked residuals with [`lm::minimize`] over
//! internally rescaled parameters (`value = offset + scale · p`), then reports
//! estimates, standard errors and covariance in physical units (rad/s for
//! frequencies and rates).

mod anticrossing;
mod bare;
mod flux;
mod kerr;
pub mod lm;
mod survey;

pub use anticrossing::{
    fit_anticrossing, fit_anticrossing_with, tuned_frequencies, AnticrossingGuess, AnticrossingMap, FluxUnits,
};
pub use bare::{
    fit_bare_resonator, fit_bare_resonator_with, guess_bare_resonator, BareFitOptions, Parameterization,
};
pub use flux::{fit_flux_calibration, fit_flux_calibration_with};
pub use kerr::{fit_kerr_calibration, select_weak_regime};
pub use survey::{mode_survey, mode_survey_with, ModeSurvey, SurveyFailure, SurveyRow};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::Spectrum;
use lm::{LmOptions, LmReport};

/// Physical unit of a fitted parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamUnit {
    /// rad/s internally; Hz in files.
    AngularFrequency,
    RadiansPerVolt,
    Radians,
    Dimensionless,
    /// Photons per unit drive power (s when power is in photons/s).
    PhotonsPerPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParameter {
    pub name: &'static str,
    pub value: f64,
    pub std_error: f64,
    pub unit: ParamUnit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub termination: String,
    pub gradient_measure: f64,
    pub residual_count: usize,
    pub non_identifiable: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    /// Row-major, same order as `parameters`.
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// The gradient criterion was met and every parameter is identifiable.
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter. Panics if the name is unknown.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("no fitted parameter named `{name}`"))
            .value
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("no fitted parameter named `{name}`"))
            .std_error
    }

    pub fn is_identifiable(&self) -> bool {
        self.diagnostics.non_identifiable.is_empty()
    }
}

/// How complex reflection data enter the residual vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ResidualKind {
    /// Real and imaginary parts stacked, two residuals per point.
    #[default]
    Complex,
    /// `|S_model| − |S_data|`, for data without a calibrated phase.
    Magnitude,
}

/// Parameter metadata for turning an [`LmReport`] into a [`FitResult`].
pub(crate) struct ParamSpec {
    pub name: &'static str,
    pub unit: ParamUnit,
    pub offset: f64,
    pub scale: f64,
}

impl ParamSpec {
    pub fn new(name: &'static str, unit: ParamUnit, offset: f64, scale: f64) -> Self {
        Self {
            name,
            unit,
            offset,
            scale,
        }
    }

    pub fn physical(&self, p: f64) -> f64 {
        self.offset + self.scale * p
    }
}

pub(crate) fn build_result(specs: &[ParamSpec], report: &LmReport, opts: &LmOptions) -> FitResult {
    let cov = report.covariance();
    let n = specs.len();
    let covariance: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| cov[(i, j)] * specs[i].scale * specs[j].scale).collect())
        .collect();
    let parameters = specs
        .iter()
        .zip(&report.params)
        .enumerate()
        .map(|(i, (s, &p))| FitParameter {
            name: s.name,
            value: s.physical(p),
            std_error: covariance[i][i].max(0.0).sqrt(),
            unit: s.unit,
        })
        .collect();
    let non_identifiable: Vec<String> = report
        .unidentifiable()
        .into_iter()
        .map(|i| specs[i].name.to_string())
        .collect();
    let converged = report.gradient_converged(opts.gradient_tol) && non_identifiable.is_empty();
    FitResult {
        parameters,
        covariance,
        residual_norm: report.residual_norm,
        iterations: report.iterations,
        converged,
        diagnostics: Diagnostics {
            termination: report.termination.as_str().to_string(),
            gradient_measure: report.gradient_measure,
            residual_count: report.residual_count,
            non_identifiable,
            warnings: Vec::new(),
        },
    }
}

/// Pointwise `raw / reference` on identical grids.
pub fn normalize_spectrum(raw: &Spectrum, reference: &Spectrum) -> Result<Spectrum> {
    if raw.frequencies() != reference.frequencies() {
        return Err(Error::Normalization("frequency grids differ".into()));
    }
    if let Some(i) = reference.s11().iter().position(|z| z.norm() == 0.0) {
        return Err(Error::Normalization(format!(
            "reference is zero at {} Hz",
            reference.frequencies()[i]
        )));
    }
    let s11: Vec<Complex64> = raw
        .s11()
        .iter()
        .zip(reference.s11())
        .map(|(a, b)| a / b)
        .collect();
    Spectrum::new(raw.frequencies().to_vec(), s11)
}

/// Writes the residuals of one complex model value into `out` according to
/// `kind`, returning how many slots were used.
#[inline]
pub(crate) fn push_residual(kind: ResidualKind, model: Complex64, data: Complex64, out: &mut [f64]) {
    match kind {
        ResidualKind::Complex => {
            out[0] = model.re - data.re;
            out[1] = model.im - data.im;
        }
        ResidualKind::Magnitude => out[0] = model.norm() - data.norm(),
    }
}

/// Jacobian row(s) for one point given `∂S/∂θ_j` for each parameter.
#[inline]
pub(crate) fn push_jacobian(
    kind: ResidualKind,
    model: Complex64,
    derivs: &[Complex64],
    jac: &mut nalgebra::DMatrix<f64>,
    row: usize,
) {
    match kind {
        ResidualKind::Complex => {
            for (j, d) in derivs.iter().enumerate() {
                jac[(row, j)] = d.re;
                jac[(row + 1, j)] = d.im;
            }
        }
        ResidualKind::Magnitude => {
            let mag = model.norm();
            for (j, d) in derivs.iter().enumerate() {
                jac[(row, j)] = if mag > 0.0 { (model.conj() * d).re / mag } else { 0.0 };
            }
        }
    }
}

pub(crate) fn rows_per_point(kind: ResidualKind) -> usize {
    match kind {
        ResidualKind::Complex => 2,
        ResidualKind::Magnitude => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{evaluate_spectrum, linear_grid, ResonatorParams, SystemModel};
    use crate::TWO_PI;

    #[test]
    fn normalization_examples() {
        let r = ResonatorParams::new(TWO_PI * 5.9e9, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap();
        let grid = linear_grid(5.87e9, 5.93e9, 301).unwrap();
        let model = evaluate_spectrum(&SystemModel::bare(r), &grid).unwrap();

        let ones = normalize_spectrum(&model, &model).unwrap();
        assert!(ones.s11().iter().all(|z| (z - 1.0).norm() < 1e-15));

        let background: Vec<Complex64> = grid
            .iter()
            .map(|f| {
                let x = (f - 5.9e9) / 3e7;
                Complex64::new(0.8 + 0.1 * x, 0.05 - 0.2 * x * x)
            })
            .collect();
        let raw: Vec<Complex64> = model.s11().iter().zip(&background).map(|(a, b)| a * b).collect();
        let raw = Spectrum::new(grid.clone(), raw).unwrap();
        let reference = Spectrum::new(grid.clone(), background).unwrap();
        let recovered = normalize_spectrum(&raw, &reference).unwrap();
        for (a, b) in recovered.s11().iter().zip(model.s11()) {
            assert!((a - b).norm() < 1e-12);
        }

        let shifted = linear_grid(5.87e9, 5.931e9, 301).unwrap();
        let other = evaluate_spectrum(&SystemModel::bare(r), &shifted).unwrap();
        assert!(matches!(normalize_spectrum(&model, &other), Err(Error::Normalization(_))));

        let mut zeros = reference.s11().to_vec();
        zeros[10] = Complex64::new(0.0, 0.0);
        let zero_ref = Spectrum::new(grid, zeros).unwrap();
        assert!(matches!(normalize_spectrum(&raw, &zero_ref), Err(Error::Normalization(_))));
    }
}
