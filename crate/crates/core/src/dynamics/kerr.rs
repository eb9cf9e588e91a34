//! Drive-power dependence of the resonance: the Kerr pull measured the way a
//! swept-probe experiment sees it.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{integrate_from, DriveConfig, MeanFieldState, SteadyStateOptions};
use crate::error::{Error, Result};
use crate::spectra::{s11_coupled, SystemModel};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Probe sweep used to locate the driven resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeScan {
    /// Number of probe frequencies per sweep direction.
    pub points: usize,
    /// Scan half-width beyond the expected resonance, in linewidths.
    pub span_linewidths: f64,
    /// Up/down sweep disagreement in |S11| above which a point is flagged
    /// bistable.
    pub hysteresis_tol: f64,
    pub steady_state: SteadyStateOptions,
}

impl Default for ProbeScan {
    fn default() -> Self {
        Self {
            points: 241,
            span_linewidths: 3.0,
            hysteresis_tol: 1e-4,
            // Critical slowing down near the bistable fold needs a longer cap.
            steady_state: SteadyStateOptions {
                max_time_decay_units: 2000.0,
                ..SteadyStateOptions::default()
            },
        }
    }
}

/// One point of the shift curve. `shift` is in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrPoint {
    /// Input amplitude `|α_in|` in √(photons/s).
    pub amplitude: f64,
    /// `|α|²` at the located resonance.
    pub occupation: f64,
    pub shift: f64,
    pub bistable: bool,
    /// Every steady-state solve behind this point converged.
    pub converged: bool,
}

impl KerrPoint {
    /// Drive power `|α_in|²` in photons/s.
    pub fn power(&self) -> f64 {
        self.amplitude * self.amplitude
    }
}

/// Locates the driven resonance for each input amplitude.
///
/// At each amplitude the probe is swept upward from below the resonance, each
/// steady state seeding the next (the branch reached from vacuum at the
/// bottom of the sweep). The resonance is the minimum of |S11| on that sweep,
/// refined by golden-section search. A matching downward sweep is used only to
/// detect hysteresis. Shifts are relative to the linear-response dip.
pub fn kerr_shift_curve(
    model: &SystemModel,
    probe: &ProbeScan,
    amplitudes: &[f64],
) -> Result<Vec<KerrPoint>> {
    if !(model.kerr <= 0.0 && model.kerr.is_finite()) {
        return Err(Error::param("kerr", "must be finite and <= 0"));
    }
    if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::param("drive amplitude", "must be finite and >= 0"));
    }
    if amplitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("drive amplitude", "amplitudes must be sorted ascending"));
    }
    if probe.points < 3 {
        return Err(Error::param("probe points", "need at least 3"));
    }
    let reference = linear_dip(model);
    amplitudes
        .par_iter()
        .map(|&a| locate(model, probe, reference, a))
        .collect()
}

/// Minimum of the linear-response |S11| within one linewidth of `ω_r`.
pub(crate) fn linear_dip(model: &SystemModel) -> f64 {
    let r = &model.resonator;
    if model.modes().is_empty() {
        return r.frequency;
    }
    let (lo, hi) = (r.frequency - r.linewidth, r.frequency + r.linewidth);
    let grid: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
    let i = argmin(grid.iter().map(|&w| s11_coupled(w, model).norm()));
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    golden_section(lo, hi, 1e-9 * r.linewidth, |w| s11_coupled(w, model).norm()).0
}

fn locate(model: &SystemModel, probe: &ProbeScan, reference: f64, amplitude: f64) -> Result<KerrPoint> {
    if amplitude == 0.0 {
        return Ok(KerrPoint {
            amplitude,
            occupation: 0.0,
            shift: 0.0,
            bistable: false,
            converged: true,
        });
    }
    let r = &model.resonator;
    let opts = &probe.steady_state;
    let n_modes = model.modes().len();
    let a_in = Complex64::new(amplitude, 0.0);

    if model.kerr == 0.0 {
        let drive = DriveConfig::new(reference, a_in)?;
        let ss = integrate_from(&MeanFieldState::vacuum(n_modes), model, &drive, false, opts)?;
        return Ok(KerrPoint {
            amplitude,
            occupation: ss.state.photons(),
            shift: 0.0,
            bistable: false,
            converged: ss.converged,
        });
    }

    // Linear on-resonance occupation bounds the pull.
    let n_linear = 4.0 * r.external_linewidth * amplitude * amplitude / (r.linewidth * r.linewidth);
    let lo = reference + 1.2 * model.kerr * n_linear - probe.span_linewidths * r.linewidth;
    let hi = reference + probe.span_linewidths * r.linewidth;
    let n = probe.points;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();

    let mut converged = true;
    let mut up = Vec::with_capacity(n);
    let mut state = MeanFieldState::vacuum(n_modes);
    for &w in &grid {
        let ss = settle(&state, model, &DriveConfig::new(w, a_in)?, opts)?;
        converged &= ss.converged;
        state = ss.state.clone();
        up.push(ss);
    }
    let mut down = vec![Complex64::new(0.0, 0.0); n];
    let mut state = MeanFieldState::vacuum(n_modes);
    for (i, &w) in grid.iter().enumerate().rev() {
        let ss = settle(&state, model, &DriveConfig::new(w, a_in)?, opts)?;
        converged &= ss.converged;
        state = ss.state;
        down[i] = ss.s11;
    }
    let bistable = up
        .iter()
        .zip(&down)
        .any(|(u, d)| (u.s11.norm() - d.norm()).abs() > probe.hysteresis_tol);

    let i = argmin(up.iter().map(|ss| ss.s11.norm()));
    let left = i.saturating_sub(1);
    let seed = up[left].state.clone();
    let solve = |w: f64| integrate_from(&seed, model, &DriveConfig::new(w, a_in)?, true, opts);
    let (w_lo, w_hi) = (grid[left], grid[(i + 1).min(n - 1)]);

    let mut failure = None;
    let (w_best, _) = golden_section(w_lo, w_hi, 1e-7 * r.linewidth, |w| match solve(w) {
        Ok(ss) => ss.s11.norm(),
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let best = solve(w_best)?;
    // Keep the grid point if refinement landed on a different branch, or
    // crept up to a fold where relaxation stalls.
    let (w_found, found) = if best.converged && best.s11.norm() <= up[i].s11.norm() {
        (w_best, best)
    } else {
        (grid[i], up[i].clone())
    };
    converged &= found.converged;

    Ok(KerrPoint {
        amplitude,
        occupation: found.state.photons(),
        shift: w_found - reference,
        bistable,
        converged,
    })
}

/// Steady state with Kerr, resuming a stalled solve a few times. Probes that
/// land close to the onset of bistability relax very slowly.
fn settle(
    initial: &MeanFieldState,
    model: &SystemModel,
    drive: &DriveConfig,
    opts: &SteadyStateOptions,
) -> Result<super::SteadyStateResult> {
    let mut ss = integrate_from(initial, model, drive, true, opts)?;
    for _ in 0..4 {
        if ss.converged {
            break;
        }
        ss = integrate_from(&ss.state, model, drive, true, opts)?;
    }
    Ok(ss)
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

/// Golden-section minimisation on `[a, b]`; returns `(x, f(x))`.
pub(crate) fn golden_section(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
