//! Physical constants and closed-form circuit quantities of a SQUID-array
//! resonator: bare frequency, impedance, charging energy, Kerr coefficient,
//! zero-point voltage and the flux/bias tuning curves.
//!
//! All angular frequencies are in rad/s. Flux values are expressed in units of
//! the (non-reduced) superconducting flux quantum `h / 2e`, so the tuning curve
//! `ω_max √|cos(2π Φ_e / Φ_0)|` has period `Φ_0 / 2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub electron_charge: f64,
    pub flux_quantum: f64,
}

/// Exact 2019 SI values for `h` and `e`.
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        hbar: PLANCK / (2.0 * PI),
        electron_charge: ELEMENTARY_CHARGE,
        flux_quantum: PLANCK / (2.0 * ELEMENTARY_CHARGE),
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// Fabrication-level description of the array resonator.
///
/// The Josephson energy only enters through `L_r = Φ_0² / E_J`, so it is not
/// stored separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDesign {
    #[serde(rename = "L_r_H")]
    pub inductance: f64,
    #[serde(rename = "C_r_F")]
    pub capacitance: f64,
    #[serde(rename = "N_SQ")]
    pub squid_count: u32,
}

impl CircuitDesign {
    pub fn new(inductance: f64, capacitance: f64, squid_count: u32) -> Result<Self> {
        let design = Self {
            inductance,
            capacitance,
            squid_count,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inductance.is_finite() && self.inductance > 0.0) {
            return Err(Error::param("L_r_H", "must be finite and > 0"));
        }
        if !(self.capacitance.is_finite() && self.capacitance > 0.0) {
            return Err(Error::param("C_r_F", "must be finite and > 0"));
        }
        if self.squid_count == 0 {
            return Err(Error::param("N_SQ", "must be >= 1"));
        }
        Ok(())
    }

    /// Charging energy `e² / 2C_r` in joules.
    pub fn charging_energy(&self) -> f64 {
        let e = PhysicalConstants::SI.electron_charge;
        e * e / (2.0 * self.capacitance)
    }
}

/// Bias-voltage calibration of the tuning curve,
/// `ω_r(V) = ω_max √|cos(G V + φ_offset)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxCalibration {
    /// Sweet-spot angular frequency (rad/s).
    pub max_frequency: f64,
    /// Phase per volt (rad/V).
    pub gain: f64,
    /// Phase offset (rad).
    pub offset: f64,
}

impl FluxCalibration {
    pub fn new(max_frequency: f64, gain: f64, offset: f64) -> Result<Self> {
        if !(max_frequency.is_finite() && max_frequency > 0.0) {
            return Err(Error::param("omega_max_Hz", "must be finite and > 0"));
        }
        if !gain.is_finite() {
            return Err(Error::param("G_rad_per_V", "must be finite"));
        }
        if !offset.is_finite() {
            return Err(Error::param("phi_offset_rad", "must be finite"));
        }
        Ok(Self {
            max_frequency,
            gain,
            offset,
        })
    }

    pub fn frequency_at(&self, bias: f64) -> f64 {
        voltage_to_frequency(self, bias)
    }

    /// Inverse of the calibration curve on the branch where the phase
    /// `G V + φ_offset` lies in `[0, π/2]`. Returns `None` when the requested
    /// frequency is outside `[0, ω_max]` or the gain is zero.
    pub fn bias_for_frequency(&self, omega: f64) -> Option<f64> {
        if self.gain == 0.0 || !(0.0..=self.max_frequency).contains(&omega) {
            return None;
        }
        let ratio = omega / self.max_frequency;
        let phase = (ratio * ratio).acos();
        Some((phase - self.offset) / self.gain)
    }
}

pub fn resonator_frequency(design: &CircuitDesign) -> f64 {
    1.0 / (design.inductance * design.capacitance).sqrt()
}

pub fn impedance(design: &CircuitDesign) -> f64 {
    (design.inductance / design.capacitance).sqrt()
}

/// Kerr coefficient `χ = −E_C / (ħ N_SQ²)` in rad/s. Always negative.
pub fn kerr_anharmonicity(design: &CircuitDesign) -> f64 {
    let n = f64::from(design.squid_count);
    -design.charging_energy() / (PhysicalConstants::SI.hbar * n * n)
}

/// Tuning curve versus external flux, with `flux` in units of `Φ_0`.
pub fn flux_tuned_frequency(max_frequency: f64, flux: f64) -> f64 {
    max_frequency * (2.0 * PI * flux).cos().abs().sqrt()
}

pub fn voltage_to_frequency(cal: &FluxCalibration, bias: f64) -> f64 {
    cal.max_frequency * (cal.gain * bias + cal.offset).cos().abs().sqrt()
}

/// Zero-point voltage fluctuation across the resonator capacitance,
/// `√(ħ ω_r / 2C_r)`.
pub fn zero_point_voltage(omega_r: f64, capacitance: f64) -> f64 {
    (PhysicalConstants::SI.hbar * omega_r / (2.0 * capacitance)).sqrt()
}
