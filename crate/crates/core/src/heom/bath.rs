use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{thermal_energy_cm, wavenumber_to_angular, SPEED_OF_LIGHT_CM_PER_FS};

/// Drude-Lorentz bath. `gamma_ps` is the decay rate of the correlation
/// function, `C(t) ∝ exp(-γt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub lambda_cm: f64,
    pub gamma_ps: f64,
    pub temperature_k: f64,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            lambda_cm: 0.0,
            gamma_ps: 100.0,
            temperature_k: 300.0,
        }
    }
}

impl BathSpec {
    pub fn new(lambda_cm: f64, gamma_ps: f64, temperature_k: f64) -> Result<Self> {
        let b = Self {
            lambda_cm,
            gamma_ps,
            temperature_k,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_lambda(self, lambda_cm: f64) -> Self {
        Self { lambda_cm, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cm >= 0.0 && self.lambda_cm.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be >= 0, got {}",
                self.lambda_cm
            )));
        }
        if !(self.gamma_ps > 0.0 && self.gamma_ps.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be > 0, got {}",
                self.gamma_ps
            )));
        }
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(Error::Parameter(format!(
                "temperature must be > 0, got {}",
                self.temperature_k
            )));
        }
        Ok(())
    }

    /// γ in fs⁻¹.
    pub fn gamma_fs(&self) -> f64 {
        self.gamma_ps * 1e-3
    }

    /// γ expressed as a wavenumber, γ/(2πc).
    pub fn gamma_cm(&self) -> f64 {
        rate_fs_to_cm(self.gamma_fs())
    }

    /// λ in rad/fs.
    pub fn lambda_fs(&self) -> f64 {
        wavenumber_to_angular(self.lambda_cm)
    }

    /// β = 1/k_BT in fs (ħ = 1).
    pub fn beta_fs(&self) -> f64 {
        1.0 / wavenumber_to_angular(thermal_energy_cm(self.temperature_k))
    }
}

fn rate_fs_to_cm(rate: f64) -> f64 {
    rate / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_FS)
}

/// J(ω) = (λ/2)·γω/(γ²+ω²), everything in cm⁻¹.
pub fn drude_lorentz(omega_cm: f64, bath: &BathSpec) -> f64 {
    let g = bath.gamma_cm();
    0.5 * bath.lambda_cm * g * omega_cm / (g * g + omega_cm * omega_cm)
}

/// (2/π)∫₀^∞ J(ω)/ω dω evaluated by quadrature on ω = γ·tan(u).
/// With the density above this comes out as λ/2.
pub fn reorganization_integral(bath: &BathSpec) -> f64 {
    let g = bath.gamma_cm();
    let n = 4000;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    let sum: f64 = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) * h;
            let w = g * u.tan();
            drude_lorentz(w, bath) / w * g / (u.cos() * u.cos())
        })
        .sum();
    2.0 / std::f64::consts::PI * sum * h
}

/// One exponential of the bath correlation function, `c·exp(-ν t)`.
/// `c` is in cm⁻² and `nu` in ps⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub c: Complex64,
    pub nu: f64,
}

impl ExpansionTerm {
    fn from_fs(c_fs2: Complex64, nu_fs: f64) -> Self {
        let k = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_FS;
        Self {
            c: c_fs2 / (k * k),
            nu: nu_fs * 1e3,
        }
    }

    /// Amplitude in fs⁻².
    pub fn c_fs2(&self) -> Complex64 {
        let k = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_FS;
        self.c * (k * k)
    }

    pub fn nu_fs(&self) -> f64 {
        self.nu * 1e-3
    }

    pub fn nu_cm(&self) -> f64 {
        rate_fs_to_cm(self.nu_fs())
    }
}

fn matsubara(bath: &BathSpec, k: usize) -> f64 {
    2.0 * std::f64::consts::PI * k as f64 / bath.beta_fs()
}

/// Leading Drude term followed by `k` Matsubara terms.
pub fn correlation_expansion(bath: &BathSpec, k: usize) -> Result<Vec<ExpansionTerm>> {
    bath.validate()?;
    let lam = bath.lambda_fs();
    let g = bath.gamma_fs();
    let beta = bath.beta_fs();
    let cot = 1.0 / (beta * g / 2.0).tan();
    let mut terms = vec![ExpansionTerm::from_fs(
        Complex64::new(lam * g * cot, -lam * g),
        g,
    )];
    for i in 1..=k {
        let nu = matsubara(bath, i);
        let denom = nu * nu - g * g;
        if denom.abs() < 1e-12 * nu * nu {
            return Err(Error::Parameter(format!(
                "Matsubara frequency {i} coincides with gamma"
            )));
        }
        let c = 4.0 * lam * g / beta * nu / denom;
        terms.push(ExpansionTerm::from_fs(Complex64::new(c, 0.0), nu));
    }
    Ok(terms)
}

/// Weight of the discarded Matsubara tail, in fs⁻¹. Enters the equations
/// of motion as `-Δ[Q,[Q,ρ]]`.
pub fn truncation_correction(bath: &BathSpec, k: usize) -> Result<f64> {
    let terms = correlation_expansion(bath, k)?;
    let lam = bath.lambda_fs();
    let g = bath.gamma_fs();
    let beta = bath.beta_fs();
    let kept: f64 = terms.iter().map(|t| t.c_fs2().re / t.nu_fs()).sum();
    Ok(2.0 * lam / (beta * g) - kept)
}
