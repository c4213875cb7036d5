//! Populations from counts, rate and reorganization-energy fits, the
//! calibration line and the calibrate-then-predict workflow.

mod fit;
mod lambda;

pub use fit::{fit_exp_cos, fit_exp_cos_data, reference_omega, RateFit, MIN_SAMPLES};
pub use lambda::{fit_lambda, fit_lambda_with, HeomCurves, LambdaFit, LambdaFitConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_circuit_trace, CircuitConfig};
use crate::error::{Error, Result};
use crate::qsim::Counts;
use crate::trace::{rms_diff, PopulationTrace};

/// `(P₁, P₂) = (N₀₁, N₁₀)/(N₀₁ + N₁₀)`. Labels are little-endian: in
/// `|01⟩` qubit 0, i.e. site 1, carries the excitation.
pub fn renormalize_counts(c: &Counts) -> Result<(f64, f64)> {
    let (n01, n10) = (c.n01(), c.n10());
    let kept = n01 + n10;
    if kept == 0 {
        return Err(Error::Leakage { counts: c.clone() });
    }
    Ok((n01 as f64 / kept as f64, n10 as f64 / kept as f64))
}

/// Share of shots outside the one-exciton manifold.
pub fn leakage_fraction(c: &Counts) -> f64 {
    let total = c.counts.iter().sum::<u64>();
    if total == 0 {
        return 0.0;
    }
    (c.n00() + c.n11()) as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub d: f64,
    pub lambda: f64,
    /// Residual of the λ fit that produced this point, if any.
    #[serde(default)]
    pub rms: f64,
}

impl CalibrationPoint {
    pub fn new(d: f64, lambda: f64) -> Self {
        Self {
            d,
            lambda,
            rms: 0.0,
        }
    }
}

/// Straight line `λ(d) = slope·d + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<CalibrationPoint>,
}

impl CalibrationCurve {
    pub fn lambda_at(&self, d: f64) -> f64 {
        self.slope * d + self.intercept
    }

    pub fn d_for(&self, lambda: f64) -> Result<f64> {
        if self.slope == 0.0 {
            return Err(Error::Rank);
        }
        Ok((lambda - self.intercept) / self.slope)
    }

    pub fn covers(&self, lambda: f64) -> bool {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                (a.min(p.lambda), b.max(p.lambda))
            });
        (lo..=hi).contains(&lambda)
    }
}

/// Ordinary least squares through the points.
pub fn build_calibration(points: &[CalibrationPoint]) -> Result<CalibrationCurve> {
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least two points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let md = points.iter().map(|p| p.d).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.lambda).sum::<f64>() / n;
    let sdd: f64 = points.iter().map(|p| (p.d - md).powi(2)).sum();
    let sdl: f64 = points.iter().map(|p| (p.d - md) * (p.lambda - ml)).sum();
    if sdd <= 1e-12 * (1.0 + md * md) {
        return Err(Error::Rank);
    }
    let slope = sdl / sdd;
    let intercept = ml - slope * md;
    let ss_tot: f64 = points.iter().map(|p| (p.lambda - ml).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.lambda - slope * p.d - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(CalibrationCurve {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// `d` rounded to a multiple of `granularity`.
pub fn round_to_granularity(d: f64, granularity: f64) -> f64 {
    if granularity > 0.0 {
        (d / granularity).round() * granularity
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub d: f64,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
    /// Damping coefficients whose fit was degenerate.
    pub excluded: Vec<f64>,
    pub argmax_d: Option<f64>,
    /// The fastest rate is strictly inside the sweep and larger than both ends.
    pub turnover: bool,
}

pub fn rate_curve(ds: &[f64], traces: &[PopulationTrace]) -> Result<RateCurve> {
    if ds.len() != traces.len() {
        return Err(Error::Parameter(format!(
            "{} d values for {} traces",
            ds.len(),
            traces.len()
        )));
    }
    let fits: Vec<Result<RateFit>> = traces.par_iter().map(fit_exp_cos).collect();
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (&d, fit) in ds.iter().zip(fits) {
        let fit = fit?;
        if fit.degenerate {
            log::warn!("degenerate rate fit at d = {d}; point excluded");
            excluded.push(d);
        } else {
            points.push(RatePoint { d, fit });
        }
    }
    let argmax = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.fit.k.total_cmp(&b.1.fit.k))
        .map(|(i, _)| i);
    let turnover = match argmax {
        Some(i) if i > 0 && i + 1 < points.len() => {
            let k = points[i].fit.k;
            k > points[0].fit.k && k > points[points.len() - 1].fit.k
        }
        _ => false,
    };
    Ok(RateCurve {
        argmax_d: argmax.map(|i| points[i].d),
        points,
        excluded,
        turnover,
    })
}

/// Circuit traces for a sweep over `ds`, all other settings from `base`.
pub fn sweep(base: &CircuitConfig, ds: &[f64]) -> Result<Vec<PopulationTrace>> {
    ds.par_iter()
        .map(|&d| run_circuit_trace(&CircuitConfig { d, ..base.clone() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub circuit: CircuitConfig,
    pub lambda_fit: LambdaFitConfig,
    /// Step to which the inverted damping coefficient is rounded.
    pub granularity: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            circuit: CircuitConfig::default(),
            lambda_fit: LambdaFitConfig::default(),
            granularity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub lambda_target: f64,
    pub d_exact: f64,
    pub d: f64,
    pub extrapolated: bool,
    pub circuit: PopulationTrace,
    pub heom: PopulationTrace,
    pub rms: f64,
}

/// Inverts the calibration line for `λ_target`, runs the circuit at the
/// rounded `d` and HEOM at `λ_target` on the same grid, and compares `P₁`.
pub fn predict_dynamics(
    curve: &CalibrationCurve,
    lambda_target: f64,
    cfg: &PredictConfig,
) -> Result<Prediction> {
    let d_exact = curve.d_for(lambda_target)?;
    let d = round_to_granularity(d_exact, cfg.granularity);
    if d < 0.0 {
        return Err(Error::Parameter(format!(
            "λ = {lambda_target} maps to a negative damping coefficient {d_exact:.3}"
        )));
    }
    let extrapolated = !curve.covers(lambda_target);
    if extrapolated {
        log::warn!("λ = {lambda_target} lies outside the calibrated span; extrapolating");
    }
    let circuit = run_circuit_trace(&CircuitConfig {
        d,
        ..cfg.circuit.clone()
    })?;
    let curves = HeomCurves::for_trace(&cfg.circuit.system(), cfg.lambda_fit, &circuit)?;
    let heom = curves.trace(lambda_target)?;
    let rms = rms_diff(&circuit.p1(), &heom.p1());
    Ok(Prediction {
        lambda_target,
        d_exact,
        d,
        extrapolated,
        circuit,
        heom,
        rms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseCalibrationConfig {
    /// Circuit settings; its `d` and `noise.depol2_p` are overridden.
    pub circuit: CircuitConfig,
    pub lambda_fit: LambdaFitConfig,
    /// Target `(d, λ)` pairs.
    pub anchors: Vec<CalibrationPoint>,
    /// Search interval for `depol2_p`.
    pub depol2_min: f64,
    pub depol2_max: f64,
    /// Final bracket width in `log10(depol2_p)`.
    pub log_tolerance: f64,
}

impl Default for NoiseCalibrationConfig {
    fn default() -> Self {
        Self {
            circuit: CircuitConfig::default(),
            lambda_fit: LambdaFitConfig::default(),
            anchors: vec![
                CalibrationPoint::new(2.0, 15.0),
                CalibrationPoint::new(18.0, 227.0),
            ],
            depol2_min: 1e-3,
            depol2_max: 0.1,
            log_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub depol2_p: f64,
    /// Sum of squared λ misfits at the anchors, cm⁻².
    pub objective: f64,
    /// Fitted `(d, λ)` at the anchors for the chosen `depol2_p`.
    pub points: Vec<CalibrationPoint>,
    pub curve: CalibrationCurve,
}

/// Fitted λ at each anchor `d` for one value of the knob.
pub fn anchor_fits(
    cfg: &NoiseCalibrationConfig,
    depol2_p: f64,
    curves: &HeomCurves,
) -> Result<Vec<CalibrationPoint>> {
    cfg.anchors
        .par_iter()
        .map(|a| {
            let circuit = CircuitConfig {
                d: a.d,
                noise: cfg.circuit.noise.with_depol2(depol2_p),
                ..cfg.circuit.clone()
            };
            let trace = run_circuit_trace(&circuit)?;
            let fit = fit_lambda_with(&trace, curves)?;
            Ok(CalibrationPoint {
                d: a.d,
                lambda: fit.lambda,
                rms: fit.rms,
            })
        })
        .collect()
}

/// Scales the two-qubit error strength so that λ fitted at the anchor
/// damping coefficients matches the anchor λ values in least squares.
pub fn calibrate_noise(cfg: &NoiseCalibrationConfig) -> Result<NoiseCalibration> {
    if cfg.anchors.len() < 2 {
        return Err(Error::Parameter(
            "calibration needs at least two anchors".into(),
        ));
    }
    if !(cfg.depol2_min > 0.0 && cfg.depol2_max > cfg.depol2_min && cfg.log_tolerance > 0.0) {
        return Err(Error::Parameter("invalid depol2 search interval".into()));
    }
    let probe = run_circuit_trace(&CircuitConfig {
        d: 0.0,
        ..cfg.circuit.clone()
    })?;
    let curves = HeomCurves::for_trace(&cfg.circuit.system(), cfg.lambda_fit, &probe)?;
    let objective = |log_p: f64| -> Result<(f64, Vec<CalibrationPoint>)> {
        let pts = anchor_fits(cfg, 10f64.powf(log_p), &curves)?;
        let err = pts
            .iter()
            .zip(&cfg.anchors)
            .map(|(p, a)| (p.lambda - a.lambda).powi(2))
            .sum();
        log::info!("depol2_p = {:.5}: objective {err:.3}", 10f64.powf(log_p));
        Ok((err, pts))
    };
    let g = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (cfg.depol2_min.log10(), cfg.depol2_max.log10());
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while b - a > cfg.log_tolerance {
        if f1.0 <= f2.0 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = objective(x2)?;
        }
    }
    let (x, (err, points)) = if f1.0 <= f2.0 { (x1, f1) } else { (x2, f2) };
    let curve = build_calibration(&points)?;
    Ok(NoiseCalibration {
        depol2_p: 10f64.powf(x),
        objective: err,
        points,
        curve,
    })
}
