use super::{Diagnostics, FitParameter, FitResult, ParamUnit};
use crate::error::{Error, Result};

/// Relative departure of the chord slope `shift/power` from the first
/// point's chord slope beyond which a point no longer counts as weak drive.
const WEAK_SLOPE_TOL: f64 = 0.10;

/// Indices (into `points`, sorted by power) of the weak-drive subset: points
/// with positive power are taken in order of increasing power while their
/// chord slope stays within 10% of the lowest-power one. Zero-power points are
/// skipped since the through-origin model fixes them.
pub fn select_weak_regime(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| points[i].0 > 0.0).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));
    let Some(&first) = order.first() else {
        return Vec::new();
    };
    let s0 = points[first].1 / points[first].0;
    order
        .into_iter()
        .take_while(|&i| {
            let s = points[i].1 / points[i].0;
            s0 != 0.0 && ((s - s0) / s0).abs() < WEAK_SLOPE_TOL
        })
        .collect()
}

/// Calibrates the on-resonance occupation per unit drive power from
/// `(power, shift rad/s)` pairs, assuming `δω_r = χ n / 2`: the weak-drive
/// points are fitted by a line through the origin and the conversion is
/// `slope / (χ/2)`. Parameter: `photons_per_unit_power`.
pub fn fit_kerr_calibration(points: &[(f64, f64)], kerr: f64) -> Result<FitResult> {
    if !(kerr.is_finite() && kerr < 0.0) {
        return Err(Error::param("kerr", "must be finite and < 0"));
    }
    if points.iter().any(|(p, s)| !(p.is_finite() && s.is_finite() && *p >= 0.0)) {
        return Err(Error::param("kerr points", "need finite shifts and non-negative powers"));
    }
    let chosen = select_weak_regime(points);
    if chosen.len() < 3 {
        return Err(Error::InsufficientLinearRange(format!(
            "{} point(s) in the weak-drive regime, need at least 3",
            chosen.len()
        )));
    }

    let sxx: f64 = chosen.iter().map(|&i| points[i].0 * points[i].0).sum();
    let sxy: f64 = chosen.iter().map(|&i| points[i].0 * points[i].1).sum();
    let slope = sxy / sxx;
    let rss: f64 = chosen
        .iter()
        .map(|&i| (points[i].1 - slope * points[i].0).powi(2))
        .sum();
    let dof = (chosen.len() - 1) as f64;
    let slope_var = rss / dof / sxx;

    let half = 0.5 * kerr;
    let value = slope / half;
    let variance = slope_var / (half * half);
    // Cosine between residual and regressor, as in the general solver.
    let rn = rss.sqrt().max(1e-6 * slope.abs() * sxx.sqrt());
    let grad: f64 = chosen
        .iter()
        .map(|&i| points[i].0 * (points[i].1 - slope * points[i].0))
        .sum::<f64>()
        .abs()
        / (sxx.sqrt() * rn.max(f64::MIN_POSITIVE));

    Ok(FitResult {
        parameters: vec![FitParameter {
            name: "photons_per_unit_power",
            value,
            std_error: variance.sqrt(),
            unit: ParamUnit::PhotonsPerPower,
        }],
        covariance: vec![vec![variance]],
        residual_norm: rss.sqrt(),
        iterations: 1,
        converged: true,
        diagnostics: Diagnostics {
            termination: "closed-form linear fit".into(),
            gradient_measure: grad,
            residual_count: chosen.len(),
            non_identifiable: Vec::new(),
            warnings: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovers_conversion() {
        let chi = -1.0e7;
        let conv = 3.5e-3;
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 10.0, 0.5 * chi * conv * i as f64 * 10.0)).collect();
        let fit = fit_kerr_calibration(&pts, chi).unwrap();
        assert!((fit.value("photons_per_unit_power") / conv - 1.0).abs() < 1e-12);
        assert_eq!(fit.diagnostics.residual_count, 5);
    }

    #[test]
    fn saturating_tail_is_excluded() {
        let chi = -1.0;
        // Linear up to p = 4, then saturating.
        let pts = [(1.0, -1.0), (2.0, -2.0), (3.0, -3.0), (4.0, -3.9), (8.0, -5.0), (16.0, -6.0)];
        assert_eq!(select_weak_regime(&pts), vec![0, 1, 2, 3]);
        let fit = fit_kerr_calibration(&pts, chi).unwrap();
        assert!(fit.value("photons_per_unit_power") > 1.9);
    }

    #[test]
    fn strong_only_data_is_rejected() {
        let pts = [(1.0, -1.0), (4.0, -2.0), (16.0, -4.0), (64.0, -8.0)];
        assert!(matches!(
            fit_kerr_calibration(&pts, -1.0),
            Err(Error::InsufficientLinearRange(_))
        ));
    }

    #[test]
    fn zero_power_point_is_ignored() {
        let pts = [(0.0, 0.0), (1.0, -2.0), (2.0, -4.0), (3.0, -6.0)];
        let fit = fit_kerr_calibration(&pts, -2.0).unwrap();
        assert!((fit.value("photons_per_unit_power") - 2.0).abs() < 1e-12);
    }
}
