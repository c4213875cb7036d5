use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exciton::ExcitonSystem;
use crate::heom::{heom_propagate, BathSpec, HierarchySpec};
use crate::trace::{rms_diff, PopulationTrace};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Everything held fixed while λ is varied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaFitConfig {
    pub gamma_ps: f64,
    pub temperature_k: f64,
    pub hierarchy: HierarchySpec,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Width of the final golden-section bracket, cm⁻¹.
    pub tolerance: f64,
}

impl Default for LambdaFitConfig {
    fn default() -> Self {
        Self {
            gamma_ps: 100.0,
            temperature_k: 300.0,
            hierarchy: HierarchySpec::default(),
            lambda_min: 0.0,
            lambda_max: 400.0,
            tolerance: 0.5,
        }
    }
}

impl LambdaFitConfig {
    pub fn bath(&self, lambda_cm: f64) -> Result<BathSpec> {
        BathSpec::new(lambda_cm, self.gamma_ps, self.temperature_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub rms: f64,
    /// The minimiser sits on an edge of the search interval.
    pub at_bound: bool,
    pub evaluations: usize,
}

/// HEOM `P₁` curves on one time grid, memoised by λ. Clones share the cache.
#[derive(Debug, Clone)]
pub struct HeomCurves {
    sys: ExcitonSystem,
    config: LambdaFitConfig,
    p0: usize,
    dt_fs: f64,
    n_steps: usize,
    cache: Arc<Mutex<HashMap<u64, Arc<Vec<f64>>>>>,
}

impl HeomCurves {
    pub fn new(
        sys: &ExcitonSystem,
        config: LambdaFitConfig,
        p0: usize,
        dt_fs: f64,
        n_steps: usize,
    ) -> Self {
        Self {
            sys: sys.clone(),
            config,
            p0,
            dt_fs,
            n_steps,
            cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    /// Grid and initial site are read off the trace: uniform spacing from
    /// `t = 0`, starting on the most populated site.
    pub fn for_trace(
        sys: &ExcitonSystem,
        config: LambdaFitConfig,
        trace: &PopulationTrace,
    ) -> Result<Self> {
        let (dt_fs, n_steps) = uniform_grid(&trace.times_fs)?;
        let first = trace
            .populations
            .first()
            .ok_or_else(|| Error::Fit("empty trace".into()))?;
        let p0 = (0..first.len())
            .max_by(|&a, &b| first[a].total_cmp(&first[b]))
            .unwrap_or(0);
        Ok(Self::new(sys, config, p0, dt_fs, n_steps))
    }

    pub fn matches(&self, trace: &PopulationTrace) -> bool {
        uniform_grid(&trace.times_fs)
            .is_ok_and(|(dt, n)| (dt - self.dt_fs).abs() < 1e-9 && n == self.n_steps)
    }

    pub fn trace(&self, lambda_cm: f64) -> Result<PopulationTrace> {
        let bath = self.config.bath(lambda_cm)?;
        heom_propagate(
            &self.sys,
            &vec![bath; self.sys.n_sites()],
            self.config.hierarchy,
            self.p0,
            self.dt_fs,
            self.n_steps,
        )
    }

    pub fn p1(&self, lambda_cm: f64) -> Result<Arc<Vec<f64>>> {
        let key = lambda_cm.to_bits();
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let curve = Arc::new(self.trace(lambda_cm)?.p1());
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, curve.clone());
        Ok(curve)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

fn uniform_grid(times: &[f64]) -> Result<(f64, usize)> {
    if times.len() < 2 || times[0].abs() > 1e-9 {
        return Err(Error::Fit(
            "trace must start at t = 0 with at least two samples".into(),
        ));
    }
    let dt = times[1] - times[0];
    for (k, &t) in times.iter().enumerate() {
        if (t - k as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
            return Err(Error::Fit(format!(
                "trace time grid is not uniform at sample {k}"
            )));
        }
    }
    Ok((dt, times.len() - 1))
}

/// Minimises `rms(P₁ − HEOM(λ).P₁)` over λ: golden-section search down to
/// the configured bracket width, then a few parabolic steps on the mean
/// square error to land on the minimum.
pub fn fit_lambda(
    trace: &PopulationTrace,
    sys: &ExcitonSystem,
    config: LambdaFitConfig,
) -> Result<LambdaFit> {
    let curves = HeomCurves::for_trace(sys, config, trace)?;
    fit_lambda_with(trace, &curves)
}

pub fn fit_lambda_with(trace: &PopulationTrace, curves: &HeomCurves) -> Result<LambdaFit> {
    if !curves.matches(trace) {
        return Err(Error::Fit(
            "HEOM curves were built for a different time grid".into(),
        ));
    }
    let cfg = &curves.config;
    if !(cfg.lambda_min >= 0.0 && cfg.lambda_max > cfg.lambda_min && cfg.tolerance > 0.0) {
        return Err(Error::Parameter(format!(
            "invalid λ search [{}, {}] with tolerance {}",
            cfg.lambda_min, cfg.lambda_max, cfg.tolerance
        )));
    }
    let mut probe = Probe {
        target: trace.p1(),
        curves,
        seen: Vec::new(),
    };
    let (mut a, mut b) = (cfg.lambda_min, cfg.lambda_max);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = probe.rms(x1)?;
    let mut f2 = probe.rms(x2)?;
    while b - a > cfg.tolerance {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = probe.rms(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = probe.rms(x2)?;
        }
    }
    let (mut best, mut best_rms) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };

    // Parabolic refinement on the squared residual through the best three
    // points, confined to the final bracket.
    for _ in 0..8 {
        let mut pts: Vec<(f64, f64)> = probe.seen.iter().map(|&(l, r)| (l, r * r)).collect();
        pts.sort_by(|p, q| p.1.total_cmp(&q.1));
        pts.truncate(3);
        if pts.len() < 3 {
            break;
        }
        let Some(x) = parabola_vertex(&pts) else {
            break;
        };
        let x = x.clamp(
            cfg.lambda_min.max(a - cfg.tolerance),
            cfg.lambda_max.min(b + cfg.tolerance),
        );
        if (x - best).abs() < 1e-6 {
            break;
        }
        let r = probe.rms(x)?;
        if r < best_rms {
            best = x;
            best_rms = r;
        } else {
            break;
        }
    }

    for edge in [cfg.lambda_min, cfg.lambda_max] {
        if (best - edge).abs() <= cfg.tolerance {
            let r = probe.rms(edge)?;
            if r <= best_rms {
                best = edge;
                best_rms = r;
            }
        }
    }
    let at_bound = (best - cfg.lambda_min).abs() <= cfg.tolerance
        || (cfg.lambda_max - best).abs() <= cfg.tolerance;
    if at_bound {
        log::warn!(
            "fitted λ = {best:.2} cm⁻¹ is at the edge of [{}, {}]",
            cfg.lambda_min,
            cfg.lambda_max
        );
    }
    Ok(LambdaFit {
        lambda: best,
        rms: best_rms,
        at_bound,
        evaluations: probe.seen.len(),
    })
}

struct Probe<'a> {
    target: Vec<f64>,
    curves: &'a HeomCurves,
    seen: Vec<(f64, f64)>,
}

impl Probe<'_> {
    fn rms(&mut self, lam: f64) -> Result<f64> {
        if let Some(&(_, r)) = self.seen.iter().find(|(l, _)| *l == lam) {
            return Ok(r);
        }
        let r = rms_diff(&self.target, &self.curves.p1(lam)?);
        self.seen.push((lam, r));
        Ok(r)
    }
}

fn parabola_vertex(p: &[(f64, f64)]) -> Option<f64> {
    let (x0, y0) = p[0];
    let (x1, y1) = p[1];
    let (x2, y2) = p[2];
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den.abs() < 1e-300 || !num.is_finite() {
        return None;
    }
    let x = x1 - 0.5 * num / den;
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let f = |x: f64| 3.0 * (x - 1.7).powi(2) + 0.2;
        let v = parabola_vertex(&[(0.0, f(0.0)), (1.0, f(1.0)), (4.0, f(4.0))]).unwrap();
        assert!((v - 1.7).abs() < 1e-12);
    }

    #[test]
    fn grid_detection() {
        assert_eq!(uniform_grid(&[0.0, 2.0, 4.0]).unwrap(), (2.0, 2));
        assert!(uniform_grid(&[0.0, 2.0, 5.0]).is_err());
        assert!(uniform_grid(&[1.0, 2.0]).is_err());
    }
}
