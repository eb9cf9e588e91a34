//! Linear input-output reflection model of a resonator coupled to a set of
//! mechanical modes.
//!
//! Susceptibilities use the convention `χ(ω) = [2i(ω − ω_0)/Γ + 1]⁻¹`. The
//! complex conjugate convention (`e^{-iωt}` time dependence, used by the
//! time-domain solver in [`crate::dynamics`]) gives identical magnitudes and
//! conjugate phases.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TWO_PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Grids longer than this are evaluated in parallel chunks.
const PARALLEL_GRID_LEN: usize = 1 << 14;

/// Microwave mode: frequency, total and external linewidths, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub frequency: f64,
    pub linewidth: f64,
    pub external_linewidth: f64,
}

impl ResonatorParams {
    pub fn new(frequency: f64, linewidth: f64, external_linewidth: f64) -> Result<Self> {
        let r = Self {
            frequency,
            linewidth,
            external_linewidth,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::param("frequency", "must be finite and > 0"));
        }
        if !(self.linewidth.is_finite() && self.linewidth > 0.0) {
            return Err(Error::param("kappa", "must be finite and > 0"));
        }
        if !(self.external_linewidth >= 0.0 && self.external_linewidth <= self.linewidth) {
            return Err(Error::param("kappa_e", "must satisfy 0 <= kappa_e <= kappa"));
        }
        Ok(())
    }

    /// `κ_i = κ − κ_e`
    pub fn internal_linewidth(&self) -> f64 {
        self.linewidth - self.external_linewidth
    }

    /// `η_e = κ_e / κ`
    pub fn coupling_efficiency(&self) -> f64 {
        self.external_linewidth / self.linewidth
    }
}

/// Mechanical mode: frequency, linewidth and coupling rate, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub frequency: f64,
    pub linewidth: f64,
    pub coupling: f64,
}

impl MechanicalMode {
    pub fn new(frequency: f64, linewidth: f64, coupling: f64) -> Result<Self> {
        let m = Self {
            frequency,
            linewidth,
            coupling,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::param("mode frequency", "must be finite and > 0"));
        }
        if !(self.linewidth.is_finite() && self.linewidth > 0.0) {
            return Err(Error::param("gamma", "must be finite and > 0"));
        }
        if !(self.coupling.is_finite() && self.coupling >= 0.0) {
            return Err(Error::param("g", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One resonator, its mechanical modes in ascending frequency order, and the
/// Kerr coefficient (rad/s, non-positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub resonator: ResonatorParams,
    modes: Vec<MechanicalMode>,
    pub kerr: f64,
}

impl SystemModel {
    /// Builds a model, sorting the modes into ascending frequency order.
    /// Two modes at exactly the same frequency are rejected.
    pub fn new(resonator: ResonatorParams, mut modes: Vec<MechanicalMode>, kerr: f64) -> Result<Self> {
        resonator.validate()?;
        for m in &modes {
            m.validate()?;
        }
        if !(kerr.is_finite() && kerr <= 0.0) {
            return Err(Error::param("kerr", "must be finite and <= 0"));
        }
        modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        if modes.windows(2).any(|w| w[0].frequency == w[1].frequency) {
            return Err(Error::InvalidModel("duplicate mechanical mode frequency".into()));
        }
        Ok(Self {
            resonator,
            modes,
            kerr,
        })
    }

    pub fn bare(resonator: ResonatorParams) -> Self {
        Self {
            resonator,
            modes: Vec::new(),
            kerr: 0.0,
        }
    }

    pub fn modes(&self) -> &[MechanicalMode] {
        &self.modes
    }

    /// Same mechanics and Kerr term with a different resonator frequency.
    pub fn with_resonator_frequency(&self, frequency: f64) -> Self {
        let mut m = self.clone();
        m.resonator.frequency = frequency;
        m
    }

    pub fn with_kerr(&self, kerr: f64) -> Result<Self> {
        Self::new(self.resonator, self.modes.clone(), kerr)
    }

    /// Smallest energy decay rate among all modes.
    pub fn slowest_decay_rate(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.linewidth)
            .fold(self.resonator.linewidth, f64::min)
    }
}

/// Sampled complex reflection on a strictly increasing grid of probe
/// frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    frequencies: Vec<f64>,
    s11: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, s11: Vec<Complex64>) -> Result<Self> {
        if frequencies.len() != s11.len() {
            return Err(Error::InvalidGrid(format!(
                "{} frequencies but {} reflection values",
                frequencies.len(),
                s11.len()
            )));
        }
        validate_grid(&frequencies)?;
        if s11.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Format("non-finite reflection value".into()));
        }
        Ok(Self { frequencies, s11 })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn s11(&self) -> &[Complex64] {
        &self.s11
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn angular_frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.frequencies.iter().map(|f| TWO_PI * f)
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Complex64>) {
        (self.frequencies, self.s11)
    }
}

/// Non-empty, finite, strictly increasing.
pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if grid.iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidGrid("grid contains non-finite values".into()));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

pub fn resonator_susceptibility(omega: f64, r: &ResonatorParams) -> Complex64 {
    lorentzian(omega, r.frequency, r.linewidth)
}

pub fn mechanical_susceptibility(omega: f64, m: &MechanicalMode) -> Complex64 {
    lorentzian(omega, m.frequency, m.linewidth)
}

#[inline]
fn lorentzian(omega: f64, center: f64, width: f64) -> Complex64 {
    (I * (2.0 * (omega - center) / width) + 1.0).inv()
}

/// `S11 = −1 + 2 η_e χ_r(ω)`
pub fn s11_bare(omega: f64, r: &ResonatorParams) -> Complex64 {
    2.0 * r.coupling_efficiency() * resonator_susceptibility(omega, r) - 1.0
}

/// Multimode reflection in the linear regime (the Kerr term is ignored):
/// `S11 = −1 + 2 η_e χ_r / (1 + Σ_k C_k χ_m,k χ_r)`.
pub fn s11_coupled(omega: f64, model: &SystemModel) -> Complex64 {
    let r = &model.resonator;
    let chi_r = resonator_susceptibility(omega, r);
    let dressing: Complex64 = model
        .modes
        .iter()
        .map(|m| cooperativity(m, r) * mechanical_susceptibility(omega, m))
        .sum();
    2.0 * r.coupling_efficiency() * chi_r / (1.0 + dressing * chi_r) - 1.0
}

/// `C = 4g² / κγ`
pub fn cooperativity(m: &MechanicalMode, r: &ResonatorParams) -> f64 {
    4.0 * m.coupling * m.coupling / (r.linewidth * m.linewidth)
}

/// `Q_m = ω_m / γ`
pub fn quality_factor(m: &MechanicalMode) -> f64 {
    m.frequency / m.linewidth
}

/// Evaluates [`s11_coupled`] on a grid of probe frequencies given in Hz.
pub fn evaluate_spectrum(model: &SystemModel, grid: &[f64]) -> Result<Spectrum> {
    validate_grid(grid)?;
    let eval = |f: &f64| s11_coupled(TWO_PI * f, model);
    let s11: Vec<Complex64> = if grid.len() >= PARALLEL_GRID_LEN {
        grid.par_iter().map(eval).collect()
    } else {
        grid.iter().map(eval).collect()
    };
    Ok(Spectrum {
        frequencies: grid.to_vec(),
        s11,
    })
}

/// Evenly spaced grid of `points` frequencies from `start` to `stop`
/// inclusive.
pub fn linear_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidGrid("need finite bounds and at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    if stop <= start {
        return Err(Error::InvalidGrid(format!("stop ({stop}) must exceed start ({start})")));
    }
    let step = (stop - start) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| start + step * i as f64).collect();
    grid[points - 1] = stop;
    validate_grid(&grid)?;
    Ok(grid)
}

/// Complex normal-mode frequencies of the coupled linear system, written as
/// `ω − iΓ/2` (decaying amplitudes have negative imaginary part), in
/// ascending order of real part.
///
/// These are the conjugated zeros of `1 + Σ_k C_k χ_m,k χ_r`, located by
/// simultaneous Aberth–Ehrlich iteration on the cleared-denominator
/// polynomial.
pub fn normal_modes(model: &SystemModel) -> Vec<Complex64> {
    let r = &model.resonator;
    let scale = r.linewidth;
    let kr = r.linewidth / scale;
    let mech: Vec<(Complex64, f64)> = model
        .modes
        .iter()
        .map(|m| {
            let center = Complex64::new((m.frequency - r.frequency) / scale, 0.0);
            let g2 = 4.0 * m.coupling * m.coupling / (scale * scale);
            (center - I * (0.5 * m.linewidth / scale), g2)
        })
        .collect();
    let resonator_root = Complex64::new(0.0, -0.5 * kr);

    // In the normalised variable z = (ω − ω_r)/κ the factors 2i(z − z_0) with
    // z_0 = center + i·width/2 are the (main-convention) denominators; we
    // solve directly for the conjugated roots so the normal modes come out
    // with negative imaginary parts.
    //   P(z) = (z − a) Π_j (z − b_j) − Σ_k (g_k²/4) Π_{j≠k} (z − b_j)
    let a = resonator_root;
    let b: Vec<Complex64> = mech.iter().map(|(c, _)| *c).collect();
    let w: Vec<f64> = mech.iter().map(|(_, g2)| g2 / 4.0).collect();

    let poly = |z: Complex64| -> (Complex64, Complex64) {
        // Value and derivative via products; O(N²), N is small.
        let n = b.len();
        let factors: Vec<Complex64> = b.iter().map(|bj| z - bj).collect();
        let prod_all: Complex64 = factors.iter().product();
        let mut p = (z - a) * prod_all;
        let mut dp = prod_all;
        for k in 0..n {
            let others: Complex64 = (0..n).filter(|&j| j != k).map(|j| factors[j]).product();
            dp += (z - a) * others;
            p -= w[k] * others;
            for l in 0..n {
                if l == k {
                    continue;
                }
                let rest: Complex64 = (0..n)
                    .filter(|&j| j != k && j != l)
                    .map(|j| factors[j])
                    .product();
                dp -= w[k] * rest;
            }
        }
        (p, dp)
    };

    let degree = b.len() + 1;
    let mut roots: Vec<Complex64> = std::iter::once(a).chain(b.iter().copied()).collect();
    // Break exact degeneracies so the Aberth correction is well defined.
    for (i, z) in roots.iter_mut().enumerate() {
        *z += Complex64::from_polar(1e-3 * (1.0 + i as f64), 0.7 + 1.3 * i as f64);
    }
    for _ in 0..500 {
        let mut max_step: f64 = 0.0;
        for i in 0..degree {
            let (p, dp) = poly(roots[i]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let newton = p / dp;
            let repulsion: Complex64 = (0..degree)
                .filter(|&j| j != i)
                .map(|j| (roots[i] - roots[j]).inv())
                .sum();
            let step = newton / (1.0 - newton * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                roots[i] -= step;
                max_step = max_step.max(step.norm() / (1.0 + roots[i].norm()));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
    // Newton polish.
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = poly(*z);
            if dp.norm() > 0.0 {
                let step = p / dp;
                if step.re.is_finite() && step.im.is_finite() {
                    *z -= step;
                }
            }
        }
    }
    let mut out: Vec<Complex64> = roots
        .into_iter()
        .map(|z| Complex64::new(r.frequency + scale * z.re, scale * z.im))
        .collect();
    out.sort_by(|x, y| x.re.total_cmp(&y.re));
    out
}

/// Zeros of `1 + Σ_k C_k χ_m,k(ω) χ_r(ω)` in the adopted susceptibility
/// convention (positive imaginary parts).
pub fn reflection_poles(model: &SystemModel) -> Vec<Complex64> {
    normal_modes(model).into_iter().map(|z| z.conj()).collect()
}
