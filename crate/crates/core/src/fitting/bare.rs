use nalgebra::DMatrix;
use num_complex::Complex64;

use super::lm::{minimize, LeastSquares, LmOptions};
use super::{build_result, push_jacobian, push_residual, rows_per_point, FitResult, ParamSpec, ParamUnit, ResidualKind};
use crate::error::{Error, Result};
use crate::spectra::{ResonatorParams, Spectrum};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which pair of linewidth parameters the optimiser works in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Parameterization {
    /// `(ω_r, κ, κ_e)`
    #[default]
    ExternalLinewidth,
    /// `(ω_r, κ, η_e)` with `κ_e = η_e κ`
    CouplingEfficiency,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BareFitOptions {
    pub parameterization: Parameterization,
    pub residual: ResidualKind,
    pub lm: LmOptions,
}

struct BareProblem<'a> {
    omega: Vec<f64>,
    data: &'a [Complex64],
    kind: ResidualKind,
    param: Parameterization,
    center: f64,
    scale: f64,
}

impl BareProblem<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64) {
        (self.center + self.scale * p[0], self.scale * p[1], p[2])
    }

    fn external_linewidth(&self, third: f64, kappa: f64) -> f64 {
        match self.param {
            Parameterization::ExternalLinewidth => self.scale * third,
            Parameterization::CouplingEfficiency => third * kappa,
        }
    }
}

impl LeastSquares for BareProblem<'_> {
    fn residual_count(&self) -> usize {
        self.omega.len() * rows_per_point(self.kind)
    }

    fn parameter_count(&self) -> usize {
        3
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (wr, kappa, third) = self.unpack(p);
        let ke = self.external_linewidth(third, kappa);
        let step = rows_per_point(self.kind);
        for (i, (&w, &d)) in self.omega.iter().zip(self.data).enumerate() {
            let den = kappa + I * (2.0 * (w - wr));
            push_residual(self.kind, 2.0 * ke / den - 1.0, d, &mut out[i * step..]);
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let (wr, kappa, third) = self.unpack(p);
        let s = self.scale;
        let step = rows_per_point(self.kind);
        for (i, &w) in self.omega.iter().enumerate() {
            let den = kappa + I * (2.0 * (w - wr));
            let inv = den.inv();
            let derivs = match self.param {
                Parameterization::ExternalLinewidth => {
                    let ke = s * third;
                    [
                        4.0 * I * ke * inv * inv * s,
                        -2.0 * ke * inv * inv * s,
                        2.0 * inv * s,
                    ]
                }
                Parameterization::CouplingEfficiency => {
                    let eta = third;
                    [
                        4.0 * I * eta * kappa * inv * inv * s,
                        (2.0 * eta * inv - 2.0 * eta * kappa * inv * inv) * s,
                        2.0 * kappa * inv,
                    ]
                }
            };
            let model = 2.0 * self.external_linewidth(third, kappa) * inv - 1.0;
            push_jacobian(self.kind, model, &derivs, out, i * step);
        }
    }
}

/// Fits `S11 = −1 + 2κ_e / (κ + 2i(ω − ω_r))` to a normalised spectrum with
/// stacked real/imaginary residuals. Without a guess, one is derived from
/// the dip of `1 − |S11|²`.
pub fn fit_bare_resonator(spectrum: &Spectrum, guess: Option<ResonatorParams>) -> Result<FitResult> {
    fit_bare_resonator_with(spectrum, guess, &BareFitOptions::default())
}

pub fn fit_bare_resonator_with(
    spectrum: &Spectrum,
    guess: Option<ResonatorParams>,
    opts: &BareFitOptions,
) -> Result<FitResult> {
    if spectrum.len() < 4 {
        return Err(Error::InvalidGrid("need at least 4 points to fit 3 parameters".into()));
    }
    let guess = match guess {
        Some(g) => {
            g.validate()?;
            g
        }
        None => guess_bare_resonator(spectrum)?,
    };
    let scale = guess.linewidth;
    let problem = BareProblem {
        omega: spectrum.angular_frequencies().collect(),
        data: spectrum.s11(),
        kind: opts.residual,
        param: opts.parameterization,
        center: guess.frequency,
        scale,
    };
    let third = match opts.parameterization {
        Parameterization::ExternalLinewidth => guess.external_linewidth / scale,
        Parameterization::CouplingEfficiency => guess.coupling_efficiency(),
    };
    let report = minimize(&problem, &[0.0, 1.0, third], &opts.lm);

    let specs = [
        ParamSpec::new("omega_r", ParamUnit::AngularFrequency, guess.frequency, scale),
        ParamSpec::new("kappa", ParamUnit::AngularFrequency, 0.0, scale),
        match opts.parameterization {
            Parameterization::ExternalLinewidth => {
                ParamSpec::new("kappa_e", ParamUnit::AngularFrequency, 0.0, scale)
            }
            Parameterization::CouplingEfficiency => ParamSpec::new("eta_e", ParamUnit::Dimensionless, 0.0, 1.0),
        },
    ];
    let mut result = build_result(&specs, &report, &opts.lm);
    let kappa = result.value("kappa");
    let ke = match opts.parameterization {
        Parameterization::ExternalLinewidth => result.value("kappa_e"),
        Parameterization::CouplingEfficiency => result.value("eta_e") * kappa,
    };
    if !(kappa > 0.0 && (0.0..=kappa).contains(&ke)) {
        result.converged = false;
        result
            .diagnostics
            .warnings
            .push(format!("estimates violate 0 <= kappa_e <= kappa (kappa = {kappa:e}, kappa_e = {ke:e})"));
    }
    Ok(result)
}

/// Derivative-free seed from the absorption profile `1 − |S11|²`, which for a
/// bare resonator is the Lorentzian `4η_e(1 − η_e) / (1 + (2Δ/κ)²)`: its peak
/// gives `ω_r`, its full width at half maximum gives `κ`, and its height gives
/// `η_e` up to the `η_e ↔ 1 − η_e` ambiguity, resolved by the sign of `Re S11`
/// on resonance.
pub fn guess_bare_resonator(spectrum: &Spectrum) -> Result<ResonatorParams> {
    let n = spectrum.len();
    let f = spectrum.frequencies();
    let raw: Vec<f64> = spectrum.s11().iter().map(|z| 1.0 - z.norm_sqr()).collect();
    let half = (n / 400).min(10);
    let absorb = moving_average(&raw, half);
    let s11 = moving_average_complex(spectrum.s11(), half);

    let (peak_idx, peak) = absorb
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut diffs: Vec<f64> = raw.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let noise = median(&mut diffs);
    if !(peak > 1e-6 && peak > 10.0 * noise) {
        return Err(Error::GuessFailure("no resonance dip detected".into()));
    }
    let edge = (n / 100).max(1);
    if peak_idx < edge || peak_idx + edge >= n {
        return Err(Error::GuessFailure("reflection minimum lies at the edge of the grid".into()));
    }

    let level = 0.5 * peak;
    let left = (0..peak_idx).rev().find(|&i| absorb[i] < level).map(|i| {
        let t = (level - absorb[i]) / (absorb[i + 1] - absorb[i]);
        f[i] + t * (f[i + 1] - f[i])
    });
    let right = (peak_idx + 1..n).find(|&i| absorb[i] < level).map(|i| {
        let t = (absorb[i - 1] - level) / (absorb[i - 1] - absorb[i]);
        f[i - 1] + t * (f[i] - f[i - 1])
    });
    let center = f[peak_idx];
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (center - l),
        (None, Some(r)) => 2.0 * (r - center),
        (None, None) => return Err(Error::GuessFailure("dip wider than the frequency window".into())),
    };
    if !(fwhm > 0.0) {
        return Err(Error::GuessFailure("could not measure the dip width".into()));
    }

    let root = (1.0 - peak.min(1.0)).sqrt();
    let eta = if s11[peak_idx].re >= 0.0 {
        0.5 * (1.0 + root)
    } else {
        0.5 * (1.0 - root)
    };
    let eta = eta.clamp(0.02, 0.98);
    let kappa = crate::TWO_PI * fwhm;
    ResonatorParams::new(crate::TWO_PI * center, kappa, eta * kappa)
        .map_err(|e| Error::GuessFailure(e.to_string()))
}

pub(crate) fn moving_average(v: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return v.to_vec();
    }
    let n = v.len();
    (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn moving_average_complex(v: &[Complex64], half: usize) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
            v[lo..hi].iter().sum::<Complex64>() / (hi - lo) as f64
        })
        .collect()
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
