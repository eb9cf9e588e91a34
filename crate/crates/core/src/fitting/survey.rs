use rayon::prelude::*;

use super::{fit_anticrossing, AnticrossingMap, FitResult};
use crate::params::FluxCalibration;

/// One mode of a survey. Frequencies and rates in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRow {
    /// Position of the map in the input list.
    pub index: usize,
    pub omega_m: f64,
    pub gamma: f64,
    pub g: f64,
    pub kappa: f64,
    /// `ω_m / γ`
    pub quality_factor: f64,
    /// `4g² / κγ`
    pub cooperativity: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeSurvey {
    pub rows: Vec<SurveyRow>,
    pub failures: Vec<SurveyFailure>,
}

/// Fits every map independently (in parallel) and tabulates the mechanical
/// parameters. A map whose fit errors, or whose coupling is not resolved, is
/// recorded as a failure and the survey carries on.
pub fn mode_survey(maps: &[AnticrossingMap], cal: &FluxCalibration) -> ModeSurvey {
    let items: Vec<(&AnticrossingMap, &FluxCalibration)> = maps.iter().map(|m| (m, cal)).collect();
    mode_survey_with(&items)
}

/// As [`mode_survey`], with a calibration per map.
pub fn mode_survey_with(items: &[(&AnticrossingMap, &FluxCalibration)]) -> ModeSurvey {
    let outcomes: Vec<_> = items
        .par_iter()
        .enumerate()
        .map(|(index, (map, cal))| (index, fit_anticrossing(map, cal, None)))
        .collect();
    let mut survey = ModeSurvey::default();
    for (index, outcome) in outcomes {
        match outcome {
            Ok(fit) if fit.is_identifiable() => {
                let (omega_m, gamma, g, kappa) =
                    (fit.value("omega_m"), fit.value("gamma"), fit.value("g"), fit.value("kappa"));
                survey.rows.push(SurveyRow {
                    index,
                    omega_m,
                    gamma,
                    g,
                    kappa,
                    quality_factor: omega_m / gamma,
                    cooperativity: 4.0 * g * g / (kappa * gamma),
                    fit,
                });
            }
            Ok(fit) => survey.failures.push(SurveyFailure {
                index,
                message: format!(
                    "not identifiable: {}",
                    fit.diagnostics.non_identifiable.join(", ")
                ),
            }),
            Err(e) => survey.failures.push(SurveyFailure {
                index,
                message: e.to_string(),
            }),
        }
    }
    survey
}
