//! Unit conventions.
//!
//! Energies enter in wavenumbers (cm⁻¹) and times in femtoseconds. A wavenumber
//! `ṽ` corresponds to the angular frequency `ω = 2π·c·ṽ` (rad/fs), which is what
//! every propagator in this crate works with internally.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Speed of light in cm/fs.
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.997_924_58e-5;

/// Boltzmann constant in cm⁻¹/K.
pub const BOLTZMANN_CM_PER_K: f64 = 0.695_034_800_4;

/// Angular frequency (rad/fs) of a wavenumber given in cm⁻¹.
pub fn wavenumber_to_angular(cm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_CM_PER_FS * cm
}

/// Wavenumber (cm⁻¹) equivalent of an angular frequency or rate in rad/fs.
pub fn angular_to_wavenumber(per_fs: f64) -> f64 {
    per_fs / (2.0 * PI * SPEED_OF_LIGHT_CM_PER_FS)
}

/// Thermal energy `k_B·T` in cm⁻¹.
pub fn thermal_energy_cm(temperature_k: f64) -> f64 {
    BOLTZMANN_CM_PER_K * temperature_k
}

/// Maps physical time onto the dimensionless rotation angle of the qubit
/// propagator: one unit of angle is `1/ω(J₀)` of physical time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyScale {
    /// Reference coupling J₀ in cm⁻¹.
    pub j0_cm: f64,
    /// Physical duration of one propagation step in fs.
    pub dt_fs: f64,
}

impl Default for EnergyScale {
    fn default() -> Self {
        Self {
            j0_cm: 100.0,
            dt_fs: 2.0,
        }
    }
}

impl EnergyScale {
    pub fn new(j0_cm: f64, dt_fs: f64) -> Self {
        Self { j0_cm, dt_fs }
    }

    /// Angle advanced per step, `δθ = 2π·c·J₀·Δt`.
    pub fn delta_theta(&self) -> f64 {
        wavenumber_to_angular(self.j0_cm) * self.dt_fs
    }

    /// Dimensionless angle reached after `fs` femtoseconds.
    pub fn theta_at(&self, fs: f64) -> f64 {
        wavenumber_to_angular(self.j0_cm) * fs
    }

    pub fn time_at_step(&self, step: usize) -> f64 {
        step as f64 * self.dt_fs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_theta_for_reference_dimer() {
        let scale = EnergyScale::new(100.0, 2.0);
        assert!((scale.delta_theta() - 0.03767).abs() < 1e-4);
    }

    #[test]
    fn thermal_energy_at_room_temperature() {
        assert!((thermal_energy_cm(300.0) - 208.51).abs() < 0.01);
    }

    #[test]
    fn wavenumber_round_trip() {
        let w = wavenumber_to_angular(530.0);
        assert!((angular_to_wavenumber(w) - 530.0).abs() < 1e-10);
    }
}
