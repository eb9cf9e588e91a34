use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bare::median;
use super::lm::{minimize, LeastSquares, LmOptions};
use super::{build_result, push_jacobian, push_residual, rows_per_point, FitResult, ParamSpec, ParamUnit, ResidualKind};
use crate::error::{Error, Result};
use crate::params::{flux_tuned_frequency, FluxCalibration};
use crate::spectra::validate_grid;
use crate::TWO_PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Unit of the flux axis of an [`AnticrossingMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxUnits {
    /// Bias voltage; rows are tuned through [`FluxCalibration::frequency_at`].
    Volts,
    /// External flux in units of the flux quantum; rows are tuned through
    /// [`flux_tuned_frequency`] with the calibration's maximum frequency.
    FluxQuanta,
}

/// Reflection spectra recorded while the resonator is tuned through a
/// mechanical mode. Row `i` of `s11` is the spectrum at `flux_axis[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnticrossingMap {
    flux_axis: Vec<f64>,
    units: FluxUnits,
    frequency_axis: Vec<f64>,
    s11: Vec<Complex64>,
}

impl AnticrossingMap {
    pub fn new(flux_axis: Vec<f64>, units: FluxUnits, frequency_axis: Vec<f64>, s11: Vec<Complex64>) -> Result<Self> {
        if flux_axis.is_empty() || flux_axis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("flux axis must be non-empty and finite".into()));
        }
        if flux_axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("flux axis must be strictly increasing".into()));
        }
        validate_grid(&frequency_axis)?;
        if s11.len() != flux_axis.len() * frequency_axis.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} × {} reflection values, got {}",
                flux_axis.len(),
                frequency_axis.len(),
                s11.len()
            )));
        }
        if s11.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Format("non-finite reflection value".into()));
        }
        Ok(Self {
            flux_axis,
            units,
            frequency_axis,
            s11,
        })
    }

    pub fn flux_axis(&self) -> &[f64] {
        &self.flux_axis
    }

    pub fn units(&self) -> FluxUnits {
        self.units
    }

    /// Probe frequencies in Hz.
    pub fn frequency_axis(&self) -> &[f64] {
        &self.frequency_axis
    }

    pub fn s11(&self) -> &[Complex64] {
        &self.s11
    }

    pub fn rows(&self) -> usize {
        self.flux_axis.len()
    }

    pub fn cols(&self) -> usize {
        self.frequency_axis.len()
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let n = self.cols();
        &self.s11[i * n..(i + 1) * n]
    }

    /// Resonator frequency (rad/s) of each row under `cal`.
    pub fn resonator_frequencies(&self, cal: &FluxCalibration) -> Vec<f64> {
        tuned_frequencies(&self.flux_axis, self.units, cal)
    }
}

/// Resonator frequency (rad/s) at each flux value under `cal`.
pub fn tuned_frequencies(flux: &[f64], units: FluxUnits, cal: &FluxCalibration) -> Vec<f64> {
    flux.iter()
        .map(|&x| match units {
            FluxUnits::Volts => cal.frequency_at(x),
            FluxUnits::FluxQuanta => flux_tuned_frequency(cal.max_frequency, x),
        })
        .collect()
}

/// Starting point for [`fit_anticrossing`], all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnticrossingGuess {
    pub omega_m: f64,
    pub gamma: f64,
    pub g: f64,
    pub kappa: f64,
    pub kappa_e: f64,
}

/// Parameter order: ω_m, γ, g, κ, κ_e.
struct MapProblem<'a> {
    omega: Vec<f64>,
    omega_r: Vec<f64>,
    map: &'a AnticrossingMap,
    kind: ResidualKind,
    center: f64,
    scales: [f64; 5],
}

impl MapProblem<'_> {
    fn physical(&self, p: &[f64]) -> [f64; 5] {
        let s = &self.scales;
        [self.center + s[0] * p[0], s[1] * p[1], s[2] * p[2], s[3] * p[3], s[4] * p[4]]
    }

    fn for_each_point(&self, mut f: impl FnMut(usize, f64, f64, Complex64)) {
        let cols = self.omega.len();
        for (r, &wr) in self.omega_r.iter().enumerate() {
            for (c, (&w, &d)) in self.omega.iter().zip(self.map.row(r)).enumerate() {
                f(r * cols + c, w, wr, d);
            }
        }
    }
}

impl LeastSquares for MapProblem<'_> {
    fn residual_count(&self) -> usize {
        self.map.s11.len() * rows_per_point(self.kind)
    }

    fn parameter_count(&self) -> usize {
        5
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let [wm, gamma, g, kappa, ke] = self.physical(p);
        let step = rows_per_point(self.kind);
        self.for_each_point(|k, w, wr, d| {
            let model = s11_point(w, wr, wm, gamma, g, kappa, ke).0;
            push_residual(self.kind, model, d, &mut out[k * step..]);
        });
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let [wm, gamma, g, kappa, ke] = self.physical(p);
        let s = self.scales;
        let step = rows_per_point(self.kind);
        self.for_each_point(|k, w, wr, _| {
            let (model, q, dm) = s11_point(w, wr, wm, gamma, g, kappa, ke);
            let qi = q.inv();
            let ds_dq = -2.0 * ke * qi * qi;
            let dmi = dm.inv();
            let g2 = 4.0 * g * g * dmi * dmi;
            let derivs = [
                ds_dq * (2.0 * I * g2) * s[0],
                ds_dq * (-g2) * s[1],
                ds_dq * (8.0 * g * dmi) * s[2],
                ds_dq * s[3],
                2.0 * qi * s[4],
            ];
            push_jacobian(self.kind, model, &derivs, out, k * step);
        });
    }
}

/// Returns `(S11, Q, D_m)` for `S11 = −1 + 2κ_e / Q`,
/// `Q = κ + 2i(ω − ω_r) + 4g² / D_m`, `D_m = γ + 2i(ω − ω_m)`.
#[inline]
fn s11_point(w: f64, wr: f64, wm: f64, gamma: f64, g: f64, kappa: f64, ke: f64) -> (Complex64, Complex64, Complex64) {
    let dm = Complex64::new(gamma, 2.0 * (w - wm));
    let q = Complex64::new(kappa, 2.0 * (w - wr)) + 4.0 * g * g / dm;
    (2.0 * ke / q - 1.0, q, dm)
}

/// Joint fit of every row of an anti-crossing map to the single-mode linear
/// reflection model, with each row's resonator frequency fixed by `cal`.
/// Parameters: `omega_m`, `gamma`, `g`, `kappa`, `kappa_e` (rad/s).
pub fn fit_anticrossing(
    map: &AnticrossingMap,
    cal: &FluxCalibration,
    guess: Option<AnticrossingGuess>,
) -> Result<FitResult> {
    fit_anticrossing_with(map, cal, guess, ResidualKind::Complex, &LmOptions::default())
}

pub fn fit_anticrossing_with(
    map: &AnticrossingMap,
    cal: &FluxCalibration,
    guess: Option<AnticrossingGuess>,
    kind: ResidualKind,
    opts: &LmOptions,
) -> Result<FitResult> {
    let omega: Vec<f64> = map.frequency_axis.iter().map(|f| TWO_PI * f).collect();
    let omega_r = map.resonator_frequencies(cal);
    if omega_r.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidModel("calibration gives a non-positive resonator frequency".into()));
    }
    let (lo, hi) = omega_r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));

    let guess = match guess {
        Some(g) => {
            let ok = [g.omega_m, g.gamma, g.g, g.kappa, g.kappa_e]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
            if !ok {
                return Err(Error::param("initial guess", "all entries must be finite and > 0"));
            }
            g
        }
        None => seed(map, &omega, &omega_r, lo, hi)?,
    };
    check_bracket(guess.omega_m, lo, hi)?;

    let scales = [guess.gamma.max(1e-6 * guess.kappa), guess.gamma, guess.g, guess.kappa, guess.kappa];
    let problem = MapProblem {
        omega,
        omega_r,
        map,
        kind,
        center: guess.omega_m,
        scales,
    };
    let p0 = [0.0, 1.0, 1.0, 1.0, guess.kappa_e / guess.kappa];
    let mut report = minimize(&problem, &p0, opts);
    if kind == ResidualKind::Magnitude {
        // |S| barely tells under- from over-coupling, so start from the
        // mirrored external linewidth too and keep the better fit.
        let mirrored = [0.0, 1.0, 1.0, 1.0, 1.0 - guess.kappa_e / guess.kappa];
        let other = minimize(&problem, &mirrored, opts);
        if other.residual_norm < report.residual_norm {
            report = other;
        }
    }
    let specs = [
        ParamSpec::new("omega_m", ParamUnit::AngularFrequency, guess.omega_m, scales[0]),
        ParamSpec::new("gamma", ParamUnit::AngularFrequency, 0.0, scales[1]),
        ParamSpec::new("g", ParamUnit::AngularFrequency, 0.0, scales[2]),
        ParamSpec::new("kappa", ParamUnit::AngularFrequency, 0.0, scales[3]),
        ParamSpec::new("kappa_e", ParamUnit::AngularFrequency, 0.0, scales[4]),
    ];
    let mut result = build_result(&specs, &report, opts);

    // Only g² enters the model.
    let g = &mut result.parameters[2];
    if g.value < 0.0 {
        g.value = -g.value;
        for row in result.covariance.iter_mut() {
            row[2] = -row[2];
        }
        for v in result.covariance[2].iter_mut() {
            *v = -*v;
        }
    }

    // A mode is resolved only if both its coupling and its linewidth stand
    // clear of their uncertainties; noise alone can fake a small g.
    let resolved = |name: &str| result.value(name).abs() > 2.0 * result.std_error(name);
    if !(resolved("g") && resolved("gamma")) || !result.is_identifiable() {
        for name in ["g", "gamma", "omega_m"] {
            if !result.diagnostics.non_identifiable.iter().any(|n| n == name) {
                result.diagnostics.non_identifiable.push(name.to_string());
            }
        }
        result.converged = false;
        result
            .diagnostics
            .warnings
            .push("coupling not resolved: mechanical parameters are not identifiable from this map".into());
    } else {
        check_bracket(result.value("omega_m"), lo, hi)?;
    }
    if result.value("gamma") <= 0.0 || result.value("kappa") <= 0.0 {
        result.converged = false;
        result.diagnostics.warnings.push("non-positive linewidth estimate".into());
    }
    Ok(result)
}

fn check_bracket(omega_m: f64, lo: f64, hi: f64) -> Result<()> {
    if omega_m < lo || omega_m > hi {
        return Err(Error::Bracketing(format!(
            "mode at {:.6e} Hz, resonator tuned over [{:.6e}, {:.6e}] Hz",
            omega_m / TWO_PI,
            lo / TWO_PI,
            hi / TWO_PI
        )));
    }
    Ok(())
}

/// Deterministic seed: a joint bare fit for `(κ, κ_e)`, the frequency where the
/// data depart most from it for `ω_m`, then coarse log-grid searches for
/// `(g, γ)` and a local scan refining `ω_m`.
fn seed(map: &AnticrossingMap, omega: &[f64], omega_r: &[f64], lo: f64, hi: f64) -> Result<AnticrossingGuess> {
    let (kappa, kappa_e) = seed_linewidths(map, omega, omega_r)?;

    let cols = omega.len();
    let mut deviation = vec![0.0; cols];
    for (r, &wr) in omega_r.iter().enumerate() {
        for (c, (&w, d)) in omega.iter().zip(map.row(r)).enumerate() {
            let bare = 2.0 * kappa_e / Complex64::new(kappa, 2.0 * (w - wr)) - 1.0;
            deviation[c] += (d - bare).norm_sqr();
        }
    }
    let peak = deviation
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let floor = median(&mut deviation.clone());
    let has_feature = peak.1 > 10.0 * floor + 1e-20 * map.rows() as f64;
    let mut omega_m = if has_feature { omega[peak.0] } else { 0.5 * (lo + hi) };
    if has_feature {
        check_bracket(omega_m, lo, hi)?;
    }

    let cost = |wm: f64, gamma: f64, g: f64| -> f64 {
        let mut total = 0.0;
        for (r, &wr) in omega_r.iter().enumerate() {
            for (&w, d) in omega.iter().zip(map.row(r)) {
                total += (s11_point(w, wr, wm, gamma, g, kappa, kappa_e).0 - d).norm_sqr();
            }
        }
        total
    };
    let search = |wm: f64| -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..25 {
            let g = kappa * 1e-3 * (500f64).powf(i as f64 / 24.0);
            for j in 0..25 {
                let gamma = kappa * 1e-4 * (1e4f64).powf(j as f64 / 24.0);
                let c = cost(wm, gamma, g);
                if c < best.0 {
                    best = (c, gamma, g);
                }
            }
        }
        best
    };

    let (_, mut gamma, mut g) = search(omega_m);
    if has_feature {
        let span = (2.0 * g).max(gamma).min(kappa);
        let mut best = (cost(omega_m, gamma, g), omega_m);
        for k in -20..=20 {
            let wm = omega_m + span * k as f64 / 20.0;
            let c = cost(wm, gamma, g);
            if c < best.0 {
                best = (c, wm);
            }
        }
        omega_m = best.1;
        (_, gamma, g) = search(omega_m);
    }
    Ok(AnticrossingGuess {
        omega_m,
        gamma,
        g,
        kappa,
        kappa_e,
    })
}

/// `(κ, κ_e)` from a joint bare-resonator fit of all rows with `ω_r` fixed,
/// seeded by the depth and width of the absorption profile of the median row.
fn seed_linewidths(map: &AnticrossingMap, omega: &[f64], omega_r: &[f64]) -> Result<(f64, f64)> {
    struct Bare<'a> {
        omega: &'a [f64],
        omega_r: &'a [f64],
        map: &'a AnticrossingMap,
        scale: f64,
    }
    impl LeastSquares for Bare<'_> {
        fn residual_count(&self) -> usize {
            2 * self.map.s11.len()
        }
        fn parameter_count(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            let (kappa, ke) = (self.scale * p[0], self.scale * p[1]);
            let cols = self.omega.len();
            for (r, &wr) in self.omega_r.iter().enumerate() {
                for (c, (&w, d)) in self.omega.iter().zip(self.map.row(r)).enumerate() {
                    let m = 2.0 * ke / Complex64::new(kappa, 2.0 * (w - wr)) - 1.0 - d;
                    let k = 2 * (r * cols + c);
                    out[k] = m.re;
                    out[k + 1] = m.im;
                }
            }
        }
        fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
            let (kappa, ke) = (self.scale * p[0], self.scale * p[1]);
            let cols = self.omega.len();
            for (r, &wr) in self.omega_r.iter().enumerate() {
                for (c, &w) in self.omega.iter().enumerate() {
                    let inv = Complex64::new(kappa, 2.0 * (w - wr)).inv();
                    let dk = -2.0 * ke * inv * inv * self.scale;
                    let de = 2.0 * inv * self.scale;
                    let k = 2 * (r * cols + c);
                    out[(k, 0)] = dk.re;
                    out[(k + 1, 0)] = dk.im;
                    out[(k, 1)] = de.re;
                    out[(k + 1, 1)] = de.im;
                }
            }
        }
    }

    let mid = map.rows() / 2;
    let row = crate::spectra::Spectrum::new(map.frequency_axis.clone(), map.row(mid).to_vec())?;
    let (kappa0, eta0) = match super::guess_bare_resonator(&row) {
        Ok(r) => (r.linewidth, r.coupling_efficiency()),
        // The dip may sit outside the window for this row; fall back to the
        // window width.
        Err(_) => (0.25 * (omega[omega.len() - 1] - omega[0]), 0.5),
    };
    let problem = Bare {
        omega,
        omega_r,
        map,
        scale: kappa0,
    };
    let report = minimize(&problem, &[1.0, eta0], &LmOptions::default());
    let (kappa, ke) = (kappa0 * report.params[0], kappa0 * report.params[1]);
    if !(kappa > 0.0 && ke > 0.0) {
        return Err(Error::GuessFailure("could not estimate resonator linewidths from the map".into()));
    }
    Ok((kappa, ke.min(kappa)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{evaluate_spectrum, MechanicalMode, ResonatorParams, SystemModel};

    /// Rows tune the resonator from `wm + lo_hz` to `wm + hi_hz`.
    fn map_over(g_hz: f64, rows: usize, cols: usize, lo_hz: f64, hi_hz: f64) -> (AnticrossingMap, FluxCalibration, SystemModel) {
        let cal = FluxCalibration::new(TWO_PI * 8.31e9, 2.0, 0.1).unwrap();
        let wm = TWO_PI * 5.9754e9;
        let r = ResonatorParams::new(wm, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap();
        let m = MechanicalMode::new(wm, TWO_PI * 220e3, TWO_PI * g_hz).unwrap();
        let model = SystemModel::new(r, vec![m], 0.0).unwrap();
        // Frequency falls with bias on this branch.
        let v_lo = cal.bias_for_frequency(wm + TWO_PI * hi_hz).unwrap();
        let v_hi = cal.bias_for_frequency(wm + TWO_PI * lo_hz).unwrap();
        let flux: Vec<f64> = (0..rows).map(|i| v_lo + (v_hi - v_lo) * i as f64 / (rows - 1) as f64).collect();
        let freq = crate::spectra::linear_grid(5.9754e9 - 12.5e6, 5.9754e9 + 12.5e6, cols).unwrap();
        let mut s11 = Vec::with_capacity(rows * cols);
        for &v in &flux {
            let spec = evaluate_spectrum(&model.with_resonator_frequency(cal.frequency_at(v)), &freq).unwrap();
            s11.extend_from_slice(spec.s11());
        }
        (AnticrossingMap::new(flux, FluxUnits::Volts, freq, s11).unwrap(), cal, model)
    }

    fn paper_map(g_hz: f64, rows: usize, cols: usize) -> (AnticrossingMap, FluxCalibration, SystemModel) {
        map_over(g_hz, rows, cols, -15e6, 15e6)
    }

    #[test]
    fn noiseless_round_trip_from_seed() {
        let (map, cal, model) = paper_map(1.65e6, 30, 300);
        let fit = fit_anticrossing(&map, &cal, None).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostics);
        let m = model.modes()[0];
        for (name, truth) in [
            ("omega_m", m.frequency),
            ("gamma", m.linewidth),
            ("g", m.coupling),
            ("kappa", model.resonator.linewidth),
            ("kappa_e", model.resonator.external_linewidth),
        ] {
            let v = fit.value(name);
            assert!(((v - truth) / truth).abs() < 1e-6, "{name}: {v} vs {truth}");
        }
    }

    #[test]
    fn decoupled_map_is_flagged() {
        let (map, cal, _) = paper_map(0.0, 20, 200);
        let fit = fit_anticrossing(&map, &cal, None).unwrap();
        assert!(!fit.converged);
        for name in ["g", "gamma"] {
            assert!(fit.diagnostics.non_identifiable.iter().any(|n| n == name));
        }
    }

    #[test]
    fn crossing_outside_map_is_bracketing_error() {
        let (map, cal, _) = map_over(1.65e6, 20, 200, 4e6, 12e6);
        assert!(matches!(fit_anticrossing(&map, &cal, None), Err(Error::Bracketing(_))));
    }

    #[test]
    fn map_shape_is_validated() {
        assert!(AnticrossingMap::new(vec![0.0, 1.0], FluxUnits::Volts, vec![1.0, 2.0], vec![Complex64::new(0.0, 0.0); 3])
            .is_err());
        assert!(AnticrossingMap::new(vec![1.0, 0.0], FluxUnits::Volts, vec![1.0], vec![Complex64::new(0.0, 0.0); 2])
            .is_err());
    }
}
