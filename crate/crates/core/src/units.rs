//! Simulation units and physical parameters.
//!
//! Lengths are in µm, times in µs, and energies are divided by the action
//! constant so they carry rad/µs. In these units the only mass-dependent
//! constant is `kappa = ħ/m` (µm²/µs).

use serde::{Deserialize, Serialize};

use crate::error::{Result, invalid};

/// ħ/m for ⁸⁷Rb in µm²/µs.
pub const KAPPA_RB87: f64 = 7.307e-4;
/// 2.3 mK trap depth expressed as U₀/ħ in rad/µs.
pub const DEPTH_2P3_MK: f64 = 301.2;
/// Tweezer waist in µm.
pub const WAIST_UM: f64 = 1.1;
/// Thermal velocity spread (≈ 25 µK) in µm/µs.
pub const DEFAULT_V_TH: f64 = 0.049;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// ħ/m, µm²/µs.
    pub kappa: f64,
    /// U₀/ħ, rad/µs.
    pub trap_depth: f64,
    /// Gaussian beam waist, µm.
    pub waist: f64,
    /// Thermal velocity spread v_th, µm/µs. Zero selects a single pure trajectory.
    pub temperature: f64,
    /// Radius of the final detection window, µm.
    pub recapture_radius: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            kappa: KAPPA_RB87,
            trap_depth: DEPTH_2P3_MK,
            waist: WAIST_UM,
            temperature: DEFAULT_V_TH,
            recapture_radius: WAIST_UM,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(invalid("kappa", "must be positive"));
        }
        if !(self.waist > 0.0) || !self.waist.is_finite() {
            return Err(invalid("waist", "must be positive"));
        }
        if !(self.trap_depth >= 0.0) || !self.trap_depth.is_finite() {
            return Err(invalid("trap_depth", "must be non-negative"));
        }
        if !(self.recapture_radius > 0.0) {
            return Err(invalid("recapture_radius", "must be positive"));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(invalid("temperature", "must be non-negative"));
        }
        Ok(())
    }

    /// Copy of these parameters with the trap depth replaced.
    pub fn with_depth(&self, depth: f64) -> Self {
        Self {
            trap_depth: depth,
            ..*self
        }
    }
}

/// Harmonic angular frequency of the Gaussian well, Ω = sqrt(4 U₀ κ / w²).
pub fn trap_angular_frequency(p: &PhysicalParams) -> Result<f64> {
    harmonic_frequency(p.trap_depth, p.waist, p.kappa)
}

pub(crate) fn harmonic_frequency(depth: f64, waist: f64, kappa: f64) -> Result<f64> {
    if !(waist > 0.0) {
        return Err(invalid("waist", "must be positive"));
    }
    if !(depth >= 0.0) {
        return Err(invalid("trap_depth", "must be non-negative"));
    }
    Ok((4.0 * depth * kappa / (waist * waist)).sqrt())
}

/// Width σ₀ = sqrt(κ / 2Ω) of the harmonic ground state (|ψ|² has standard deviation σ₀).
pub fn ground_state_width(p: &PhysicalParams) -> Result<f64> {
    if !(p.trap_depth > 0.0) {
        return Err(invalid(
            "trap_depth",
            "no bound ground state without a trap (depth must be > 0)",
        ));
    }
    let omega = trap_angular_frequency(p)?;
    Ok((p.kappa / (2.0 * omega)).sqrt())
}

/// Linear map from normalized pulse intensity to trap depth.
pub fn depth_from_intensity(p: &PhysicalParams, intensity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(invalid("intensity", format!("{intensity} outside [0, 1]")));
    }
    Ok(intensity * p.trap_depth)
}
