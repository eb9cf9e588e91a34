//! Time-domain mean-field dynamics of the driven resonator and its mechanical
//! modes, in the frame rotating at the drive frequency:
//!
//! ```text
//! α̇   = (iΔ_r − κ/2) α − i Σ_k g_k β_k + √κ_e α_in   [− iχ|α|²α with Kerr]
//! β̇_k = (iΔ_m,k − γ_k/2) β_k − i g_k α
//! ```
//!
//! with `Δ_j = ω_d − ω_j` and the output field `α_out = −α_in + √κ_e α`.
//!
//! These equations carry the `e^{-iωt}` convention, so the raw ratio
//! `α_out / α_in` is the complex conjugate of the closed-form reflection in
//! [`crate::spectra`]. [`SteadyStateResult::s11`] is reported in the
//! closed-form convention; [`SteadyStateResult::output_ratio`] gives the raw
//! ratio.

mod kerr;
pub mod ode;

pub use kerr::{kerr_shift_curve, KerrPoint, ProbeScan};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectra::SystemModel;
use ode::{Control, Dopri5, Outcome, Tolerances};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coherent drive: angular frequency (rad/s) and input amplitude in
/// √(photons/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveConfig {
    pub frequency: f64,
    pub amplitude: Complex64,
}

impl DriveConfig {
    pub fn new(frequency: f64, amplitude: Complex64) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::param("drive frequency", "must be finite and > 0"));
        }
        if !(amplitude.re.is_finite() && amplitude.im.is_finite()) {
            return Err(Error::param("drive amplitude", "must be finite"));
        }
        Ok(Self {
            frequency,
            amplitude,
        })
    }
}

/// Mean-field amplitudes: resonator `α` (√photons) and one `β_k` per
/// mechanical mode (√phonons).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub resonator: Complex64,
    pub mechanics: Vec<Complex64>,
}

impl MeanFieldState {
    pub fn vacuum(modes: usize) -> Self {
        Self {
            resonator: Complex64::new(0.0, 0.0),
            mechanics: vec![Complex64::new(0.0, 0.0); modes],
        }
    }

    pub fn norm(&self) -> f64 {
        (self.resonator.norm_sqr() + self.mechanics.iter().map(|b| b.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Resonator occupation `|α|²`.
    pub fn photons(&self) -> f64 {
        self.resonator.norm_sqr()
    }

    fn to_vec(&self) -> Vec<Complex64> {
        std::iter::once(self.resonator)
            .chain(self.mechanics.iter().copied())
            .collect()
    }

    fn from_slice(y: &[Complex64]) -> Self {
        Self {
            resonator: y[0],
            mechanics: y[1..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateResult {
    pub state: MeanFieldState,
    /// Reflection in the closed-form (`spectra`) convention.
    pub s11: Complex64,
    pub converged: bool,
    /// `max_k |ẏ_k| / (|p_k| ‖y‖)` at the final state, where `p_k` is the
    /// complex rate `iΔ_k − Γ_k/2` of component `k`.
    pub residual: f64,
    pub elapsed_model_time: f64,
}

impl SteadyStateResult {
    /// Raw `α_out / α_in` from the equations of motion.
    pub fn output_ratio(&self) -> Complex64 {
        self.s11.conj()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Relative tolerance of the integrator.
    pub rtol: f64,
    /// Stop once the normalised derivative residual falls below this.
    pub steady_tol: f64,
    /// Cap on integrated model time, in units of `1 / γ_min`.
    pub max_time_decay_units: f64,
    pub max_steps: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            steady_tol: 1e-8,
            max_time_decay_units: 50.0,
            max_steps: 20_000_000,
        }
    }
}

/// Rates entering the equations of motion, precomputed for one drive.
struct Rhs {
    resonator_pole: Complex64,
    mechanical_poles: Vec<Complex64>,
    couplings: Vec<f64>,
    source: Complex64,
    kerr: f64,
}

impl Rhs {
    fn new(model: &SystemModel, drive: &DriveConfig, include_kerr: bool) -> Self {
        let r = &model.resonator;
        Self {
            resonator_pole: Complex64::new(-r.linewidth / 2.0, drive.frequency - r.frequency),
            mechanical_poles: model
                .modes()
                .iter()
                .map(|m| Complex64::new(-m.linewidth / 2.0, drive.frequency - m.frequency))
                .collect(),
            couplings: model.modes().iter().map(|m| m.coupling).collect(),
            source: r.external_linewidth.sqrt() * drive.amplitude,
            kerr: if include_kerr { model.kerr } else { 0.0 },
        }
    }

    fn eval(&self, y: &[Complex64], dy: &mut [Complex64]) {
        let alpha = y[0];
        let mut da = self.resonator_pole * alpha + self.source;
        if self.kerr != 0.0 {
            da -= I * (self.kerr * alpha.norm_sqr()) * alpha;
        }
        for (k, (&pole, &g)) in self.mechanical_poles.iter().zip(&self.couplings).enumerate() {
            let beta = y[k + 1];
            da -= I * g * beta;
            dy[k + 1] = pole * beta - I * g * alpha;
        }
        dy[0] = da;
    }
}

/// Right-hand side of the mean-field equations at `state`.
pub fn mean_field_derivative(
    state: &MeanFieldState,
    model: &SystemModel,
    drive: &DriveConfig,
    include_kerr: bool,
) -> MeanFieldState {
    let rhs = Rhs::new(model, drive, include_kerr);
    let y = state.to_vec();
    let mut dy = vec![Complex64::new(0.0, 0.0); y.len()];
    rhs.eval(&y, &mut dy);
    MeanFieldState::from_slice(&dy)
}

/// Integrates from vacuum until the state stops changing.
pub fn integrate_to_steady_state(
    model: &SystemModel,
    drive: &DriveConfig,
    include_kerr: bool,
    options: &SteadyStateOptions,
) -> Result<SteadyStateResult> {
    integrate_from(
        &MeanFieldState::vacuum(model.modes().len()),
        model,
        drive,
        include_kerr,
        options,
    )
}

/// Integrates from an arbitrary initial state until the state stops changing
/// or the time cap is reached. Non-convergence is reported through
/// `converged = false`, not as an error.
pub fn integrate_from(
    initial: &MeanFieldState,
    model: &SystemModel,
    drive: &DriveConfig,
    include_kerr: bool,
    options: &SteadyStateOptions,
) -> Result<SteadyStateResult> {
    check_dissipative(model)?;
    if initial.mechanics.len() != model.modes().len() {
        return Err(Error::InvalidModel(format!(
            "initial state has {} mechanical amplitudes, model has {} modes",
            initial.mechanics.len(),
            model.modes().len()
        )));
    }
    if drive.amplitude.norm() == 0.0 {
        return Err(Error::UndefinedReflection);
    }

    let r = &model.resonator;
    let rhs = Rhs::new(model, drive, include_kerr);
    let slowest = model.slowest_decay_rate();
    let t_max = options.max_time_decay_units / slowest;

    // Amplitude scale of the driven resonator on resonance.
    let amp_scale = (2.0 * r.external_linewidth.sqrt() * drive.amplitude.norm() / r.linewidth)
        .max(initial.norm())
        .max(f64::MIN_POSITIVE);
    let tol = Tolerances {
        rtol: options.rtol,
        atol: options.rtol * amp_scale * 1e-3,
    };

    let fastest = model
        .modes()
        .iter()
        .map(|m| m.linewidth + (drive.frequency - m.frequency).abs())
        .fold(r.linewidth + (drive.frequency - r.frequency).abs(), f64::max);
    let h0 = 0.01 / fastest;

    // Distance of each component to its fixed point, estimated from its own
    // complex decay rate.
    let pole_scale: Vec<f64> = std::iter::once(rhs.resonator_pole.norm())
        .chain(rhs.mechanical_poles.iter().map(|p| p.norm()))
        .collect();

    let mut y = initial.to_vec();
    let mut solver = Dopri5::new(y.len(), tol, options.max_steps);
    let mut residual = f64::INFINITY;
    let steady_tol = options.steady_tol;
    let (outcome, t, _) = solver.integrate(
        |_, y, dy| rhs.eval(y, dy),
        &mut y,
        0.0,
        t_max,
        h0,
        |_, y, dy| {
            residual = steady_residual(y, dy, &pole_scale);
            if residual < steady_tol {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );

    let state = MeanFieldState::from_slice(&y);
    let alpha_out = -drive.amplitude + r.external_linewidth.sqrt() * state.resonator;
    let ratio = alpha_out / drive.amplitude;
    Ok(SteadyStateResult {
        state,
        s11: ratio.conj(),
        converged: outcome == Outcome::Stopped && residual < steady_tol,
        residual,
        elapsed_model_time: t,
    })
}

fn check_dissipative(model: &SystemModel) -> Result<()> {
    let r = &model.resonator;
    if !(r.linewidth > 0.0 && r.linewidth.is_finite()) {
        return Err(Error::InvalidModel("resonator linewidth must be > 0".into()));
    }
    if model.modes().iter().any(|m| !(m.linewidth > 0.0 && m.linewidth.is_finite())) {
        return Err(Error::InvalidModel("every mechanical linewidth must be > 0".into()));
    }
    Ok(())
}

fn steady_residual(y: &[Complex64], dy: &[Complex64], pole_scale: &[f64]) -> f64 {
    let ny = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if ny == 0.0 {
        return f64::INFINITY;
    }
    dy.iter()
        .zip(pole_scale)
        .map(|(d, p)| d.norm() / p)
        .fold(0.0, f64::max)
        / ny
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{s11_coupled, MechanicalMode, ResonatorParams};
    use crate::TWO_PI;

    fn resonator() -> ResonatorParams {
        ResonatorParams::new(TWO_PI * 5.9e9, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap()
    }

    fn coupled_model() -> SystemModel {
        let m = MechanicalMode::new(TWO_PI * 5.905e9, TWO_PI * 220e3, TWO_PI * 1.65e6).unwrap();
        SystemModel::new(resonator(), vec![m], TWO_PI * -2e6).unwrap()
    }

    #[test]
    fn vacuum_is_fixed_point_without_drive() {
        let model = coupled_model();
        let drive = DriveConfig::new(TWO_PI * 5.9e9, Complex64::new(0.0, 0.0)).unwrap();
        let d = mean_field_derivative(&MeanFieldState::vacuum(1), &model, &drive, true);
        assert_eq!(d, MeanFieldState::vacuum(1));
    }

    #[test]
    fn decoupled_cavity_derivative() {
        let r = resonator();
        let model = SystemModel::bare(r);
        let drive = DriveConfig::new(r.frequency + 3e6, Complex64::new(1e3, -2e3)).unwrap();
        let alpha = Complex64::new(0.3, 0.7);
        let state = MeanFieldState {
            resonator: alpha,
            mechanics: vec![],
        };
        let d = mean_field_derivative(&state, &model, &drive, false);
        let expected = Complex64::new(-r.linewidth / 2.0, 3e6) * alpha
            + r.external_linewidth.sqrt() * drive.amplitude;
        assert!((d.resonator - expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn analytic_fixed_point_on_resonance() {
        let r = resonator();
        let model = SystemModel::bare(r);
        let a_in = Complex64::new(5e3, 0.0);
        let drive = DriveConfig::new(r.frequency, a_in).unwrap();
        let alpha_ss = 2.0 * r.external_linewidth.sqrt() * a_in / r.linewidth;
        let state = MeanFieldState {
            resonator: alpha_ss,
            mechanics: vec![],
        };
        let d = mean_field_derivative(&state, &model, &drive, false);
        let scale = r.external_linewidth.sqrt() * a_in.norm();
        assert!(d.resonator.norm() / scale < 1e-12);
    }

    #[test]
    fn steady_state_matches_closed_form() {
        let model = coupled_model();
        for detuning in [-20e6, -3e6, -0.5e6, 0.0, 4.9e6, 5.0e6, 5.1e6, 30e6] {
            let w = model.resonator.frequency + TWO_PI * detuning;
            let drive = DriveConfig::new(w, Complex64::new(100.0, 50.0)).unwrap();
            let res = integrate_to_steady_state(&model, &drive, false, &Default::default()).unwrap();
            assert!(res.converged, "{detuning}: residual {}", res.residual);
            let closed = s11_coupled(w, &model);
            assert!((res.s11 - closed).norm() < 1e-6 * closed.norm().max(1e-3), "{detuning}");
        }
    }

    #[test]
    fn zero_input_is_undefined_reflection() {
        let model = coupled_model();
        let drive = DriveConfig::new(model.resonator.frequency, Complex64::new(0.0, 0.0)).unwrap();
        assert!(matches!(
            integrate_to_steady_state(&model, &drive, false, &Default::default()),
            Err(Error::UndefinedReflection)
        ));
    }

    #[test]
    fn fully_overcoupled_reflects_plus_one() {
        let r = ResonatorParams::new(TWO_PI * 6e9, TWO_PI * 10e6, TWO_PI * 10e6).unwrap();
        let model = SystemModel::bare(r);
        let drive = DriveConfig::new(r.frequency, Complex64::new(1.0, 0.0)).unwrap();
        let res = integrate_to_steady_state(&model, &drive, false, &Default::default()).unwrap();
        assert!((res.s11 - 1.0).norm() < 1e-7);
    }

    #[test]
    fn non_dissipative_model_is_rejected() {
        let mut model = coupled_model();
        model.resonator.linewidth = 0.0;
        let drive = DriveConfig::new(TWO_PI * 5.9e9, Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            integrate_to_steady_state(&model, &drive, false, &Default::default()),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn time_cap_reports_non_convergence() {
        let model = coupled_model();
        let drive = DriveConfig::new(model.resonator.frequency, Complex64::new(1.0, 0.0)).unwrap();
        let opts = SteadyStateOptions {
            max_time_decay_units: 0.01,
            ..Default::default()
        };
        let res = integrate_to_steady_state(&model, &drive, false, &opts).unwrap();
        assert!(!res.converged);
        assert!(res.residual > opts.steady_tol);
    }

    #[test]
    fn linear_response_scales_with_input() {
        let model = coupled_model();
        let w = model.resonator.frequency + TWO_PI * 4e6;
        let base = DriveConfig::new(w, Complex64::new(10.0, 0.0)).unwrap();
        let c = Complex64::new(-3.0, 7.5);
        let scaled = DriveConfig::new(w, base.amplitude * c).unwrap();
        let opts = SteadyStateOptions {
            rtol: 1e-12,
            steady_tol: 1e-12,
            ..Default::default()
        };
        let a = integrate_to_steady_state(&model, &base, false, &opts).unwrap();
        let b = integrate_to_steady_state(&model, &scaled, false, &opts).unwrap();
        assert!((b.s11 - a.s11).norm() < 1e-10);
        let expected = a.state.resonator * c;
        assert!((b.state.resonator - expected).norm() < 1e-8 * expected.norm());
        let expected = a.state.mechanics[0] * c;
        assert!((b.state.mechanics[0] - expected).norm() < 1e-8 * expected.norm());
    }
}
