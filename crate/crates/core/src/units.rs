//! Conversions from configuration units to internal units (µs, rad/µs).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Ordinary frequency in MHz → angular frequency in rad/µs.
pub fn mhz(nu: f64) -> f64 {
    TAU * nu
}

/// Ordinary frequency in GHz → rad/µs.
pub fn ghz(nu: f64) -> f64 {
    TAU * 1e3 * nu
}

/// Ordinary frequency in kHz → rad/µs.
pub fn khz(nu: f64) -> f64 {
    TAU * 1e-3 * nu
}

/// Ordinary frequency in Hz → rad/µs.
pub fn hz(nu: f64) -> f64 {
    TAU * 1e-6 * nu
}

/// Decay rate in kHz, read as a linear rate `1/T` → µs⁻¹ (no 2π).
pub fn khz_rate(gamma: f64) -> f64 {
    gamma * 1e-3
}

/// rad/µs → MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / TAU
}

/// How the drive and coupling deviations δΩ′ (MHz) and δλ (kHz) map to rad/µs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationUnits {
    /// The number is taken as an angular rate: 1 MHz ↦ 1 rad/µs.
    #[default]
    Angular,
    /// The number is an ordinary frequency: 1 MHz ↦ 2π rad/µs.
    Cyclic,
}

impl DeviationUnits {
    pub fn mhz(self, v: f64) -> f64 {
        match self {
            Self::Angular => v,
            Self::Cyclic => mhz(v),
        }
    }

    pub fn khz(self, v: f64) -> f64 {
        self.mhz(v * 1e-3)
    }
}
