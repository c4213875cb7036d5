use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::PopulationTrace;
use crate::units::wavenumber_to_angular;

pub const MIN_SAMPLES: usize = 20;

/// Peak-to-peak population swing below which a trace is treated as flat.
const FLAT_TRACE: f64 = 1e-6;

/// `P₁(t) = 0.5 + A·e^{−kt}·cos(ωt + φ)` with `t` in ps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// ps⁻¹
    pub k: f64,
    /// rad/ps
    pub omega: f64,
    pub a: f64,
    pub phi: f64,
    pub rms: f64,
    /// Set when the data carry no decay information (flat trace or A ≈ 0).
    pub degenerate: bool,
}

impl RateFit {
    pub fn eval(&self, t_ps: f64) -> f64 {
        model(&Vector4::new(self.a, self.k, self.omega, self.phi), t_ps)
    }
}

fn model(p: &Vector4<f64>, t: f64) -> f64 {
    0.5 + p[0] * (-p[1] * t).exp() * (p[2] * t + p[3]).cos()
}

fn residuals(p: &Vector4<f64>, t: &[f64], y: &[f64], r: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..t.len() {
        r[i] = model(p, t[i]) - y[i];
        sum += r[i] * r[i];
    }
    sum
}

/// Damped Gauss-Newton (Levenberg-Marquardt) from one start. `k` is kept
/// non-negative by projection; parameters with `free[i] == false` stay put.
fn levenberg_marquardt(
    t: &[f64],
    y: &[f64],
    start: Vector4<f64>,
    free: [bool; 4],
) -> Option<(Vector4<f64>, f64)> {
    let n = t.len();
    let mut p = start;
    let mut r = vec![0.0; n];
    let mut trial_r = vec![0.0; n];
    let mut cost = residuals(&p, t, y, &mut r);
    let mut mu = 1e-3;
    for _ in 0..500 {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for i in 0..n {
            let e = (-p[1] * t[i]).exp();
            let arg = p[2] * t[i] + p[3];
            let (s, c) = arg.sin_cos();
            let mut g = Vector4::new(
                e * c,
                -t[i] * p[0] * e * c,
                -t[i] * p[0] * e * s,
                -p[0] * e * s,
            );
            for d in 0..4 {
                if !free[d] {
                    g[d] = 0.0;
                }
            }
            jtj += g * g.transpose();
            jtr += g * r[i];
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut lhs = jtj;
            for d in 0..4 {
                lhs[(d, d)] += mu * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let mut trial = p + step;
            trial[1] = trial[1].max(0.0);
            let trial_cost = residuals(&trial, t, y, &mut trial_r);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel = (cost - trial_cost) / cost.max(1e-300);
                p = trial;
                cost = trial_cost;
                std::mem::swap(&mut r, &mut trial_r);
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-14 || cost < 1e-28 {
                    return Some((p, cost));
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    cost.is_finite().then_some((p, cost))
}

/// Puts a fit into canonical form: `A ≥ 0`, `ω ≥ 0`, `φ ∈ (−π, π]`.
fn canonical(mut p: Vector4<f64>) -> Vector4<f64> {
    use std::f64::consts::PI;
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
    }
    p[3] = (p[3] + PI).rem_euclid(2.0 * PI) - PI;
    if p[3] <= -PI {
        p[3] += 2.0 * PI;
    }
    p
}

/// Reference oscillation frequency of the populations, `2·ω(J₀)`, in rad/ps.
pub fn reference_omega(j0_cm: f64) -> f64 {
    2.0 * wavenumber_to_angular(j0_cm) * 1e3
}

/// Multi-start least squares on raw samples (`t` in ps).
pub fn fit_exp_cos_data(t: &[f64], y: &[f64], omega_ref: f64) -> Result<RateFit> {
    if t.len() != y.len() {
        return Err(Error::Fit(format!(
            "{} times but {} samples",
            t.len(),
            y.len()
        )));
    }
    if t.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            t.len()
        )));
    }
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi - lo).is_finite() {
        return Err(Error::Fit("trace contains non-finite samples".into()));
    }
    if hi - lo < FLAT_TRACE {
        let rms = (y.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        return Ok(RateFit {
            k: 0.0,
            omega: 0.0,
            a: 0.0,
            phi: 0.0,
            rms,
            degenerate: true,
        });
    }

    let mut omegas = vec![0.0, omega_ref];
    omegas.extend((0..5).map(|i| 0.5 * omega_ref * i as f64));
    omegas.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let a0 = if (y[0] - 0.5).abs() > 1e-3 {
        y[0] - 0.5
    } else {
        0.5 * (hi - lo)
    };

    let mut best: Option<(Vector4<f64>, f64)> = None;
    let mut attempts = Vec::new();
    for &w in &omegas {
        for k in [0.1, 1.0, 10.0] {
            match levenberg_marquardt(t, y, Vector4::new(a0, k, w, 0.0), [true; 4]) {
                Some((p, cost)) => {
                    if best.as_ref().is_none_or(|(_, c)| cost < *c) {
                        best = Some((p, cost));
                    }
                }
                None => attempts.push(format!("start ω={w:.3} k={k}")),
            }
        }
    }
    let (mut p, mut cost) =
        best.ok_or_else(|| Error::Fit(format!("no start converged: {}", attempts.join(", "))))?;
    let span = t[t.len() - 1] - t[0];
    if p[2].abs() * span < std::f64::consts::PI {
        // Less than half a period inside the window: the oscillation is not
        // identifiable, so the trace is treated as overdamped.
        let mut exp_best: Option<(Vector4<f64>, f64)> = None;
        for k in [0.1, 1.0, 10.0, 100.0] {
            if let Some(fit) = levenberg_marquardt(
                t,
                y,
                Vector4::new(a0, k, 0.0, 0.0),
                [true, true, false, false],
            ) {
                if exp_best.as_ref().is_none_or(|(_, c)| fit.1 < *c) {
                    exp_best = Some(fit);
                }
            }
        }
        if let Some(fit) = exp_best {
            (p, cost) = fit;
        }
    }
    let p = canonical(p);
    let rms = (cost / t.len() as f64).sqrt();
    Ok(RateFit {
        a: p[0],
        k: p[1],
        omega: p[2],
        phi: p[3],
        rms,
        degenerate: p[0] < 1e-3,
    })
}

/// Fits `P₁` of a trace. The oscillation reference comes from the trace's
/// own angle column, so the fit does not need the system.
pub fn fit_exp_cos(trace: &PopulationTrace) -> Result<RateFit> {
    let t = trace.times_ps();
    let omega_ref = trace
        .thetas
        .iter()
        .zip(&t)
        .rev()
        .find(|(_, &tp)| tp > 0.0)
        .map(|(th, tp)| 2.0 * th / tp)
        .unwrap_or(0.0);
    let omega_ref = if omega_ref > 0.0 {
        omega_ref
    } else {
        reference_omega(100.0)
    };
    fit_exp_cos_data(&t, &trace.p1(), omega_ref)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=150).map(|k| k as f64 * 2e-3).collect()
    }

    #[test]
    fn recovers_damped_cosine() {
        let t = grid();
        let y: Vec<f64> = t
            .iter()
            .map(|&x| 0.5 + 0.5 * (-2.0 * x).exp() * (37.67 * x).cos())
            .collect();
        let f = fit_exp_cos_data(&t, &y, reference_omega(100.0)).unwrap();
        assert!((f.k - 2.0).abs() < 0.02, "{f:?}");
        assert!((f.omega - 37.67).abs() < 0.1, "{f:?}");
        assert!(f.rms < 1e-8);
    }

    #[test]
    fn flat_trace_is_degenerate() {
        let t = grid();
        let f = fit_exp_cos_data(&t, &vec![0.5; t.len()], 37.67).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.a, 0.0);
    }

    #[test]
    fn pure_exponential() {
        let t = grid();
        let y: Vec<f64> = t.iter().map(|&x| 0.5 + 0.5 * (-8.0 * x).exp()).collect();
        let f = fit_exp_cos_data(&t, &y, 37.67).unwrap();
        assert!((f.k - 8.0).abs() < 1e-3, "{f:?}");
        assert!(f.omega < 1e-2);
    }

    #[test]
    fn overdamped_biexponential_falls_back_to_single_rate() {
        let t = grid();
        let y: Vec<f64> = t
            .iter()
            .map(|&x| 0.5 + 0.55 * (-20.0 * x).exp() - 0.05 * (-120.0 * x).exp())
            .collect();
        let f = fit_exp_cos_data(&t, &y, reference_omega(100.0)).unwrap();
        assert_eq!(f.omega, 0.0);
        assert!(f.a < 1.0 && f.k > 15.0 && f.k < 30.0, "{f:?}");
        assert!(!f.degenerate);
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_exp_cos_data(&[0.0; 5], &[0.5; 5], 1.0).is_err());
    }

    #[test]
    fn canonical_form() {
        let p = canonical(Vector4::new(-0.5, 1.0, -3.0, 0.2));
        let q = Vector4::new(-0.5, 1.0, -3.0, 0.2);
        for t in [0.0, 0.1, 0.7] {
            assert!((model(&p, t) - model(&q, t)).abs() < 1e-12);
        }
        assert!(p[0] >= 0.0 && p[2] >= 0.0);
    }
}
