use gatebath::analysis::{fit_lambda, LambdaFitConfig};
use gatebath::engine::{oracle_trace, run_circuit_trace, CircuitConfig};
use gatebath::exciton::ExcitonSystem;
use gatebath::heom::{heom_propagate, BathSpec, HierarchySpec};
use gatebath::noisegen::{Layout, NoiseModel, SequenceKind};
use gatebath::qsim::{identity, kron, pauli_x, pauli_y, CMatrix};
use num_complex::Complex64;

fn dimer() -> ExcitonSystem {
    ExcitonSystem::symmetric_dimer(100.0)
}

#[test]
fn lambda_fit_recovers_its_own_heom_trace() {
    let bath = BathSpec::new(50.0, 100.0, 300.0).unwrap();
    let trace =
        heom_propagate(&dimer(), &[bath; 2], HierarchySpec::default(), 0, 2.0, 150).unwrap();
    let fit = fit_lambda(&trace, &dimer(), LambdaFitConfig::default()).unwrap();
    assert!((fit.lambda - 50.0).abs() <= 0.5, "{fit:?}");
    assert!(fit.rms < 1e-6, "{fit:?}");
    assert!(!fit.at_bound);
}

#[test]
fn closed_system_trace_fits_at_the_lower_bound() {
    let trace = oracle_trace(&dimer(), 0, 2.0, 150).unwrap();
    let fit = fit_lambda(&trace, &dimer(), LambdaFitConfig::default()).unwrap();
    assert!(fit.at_bound && fit.lambda < 1.0, "{fit:?}");
}

#[test]
fn sampled_rabi_stays_in_the_binomial_band() {
    let cfg = CircuitConfig {
        noise: NoiseModel::ideal(),
        seed: 11,
        ..CircuitConfig::default()
    };
    let trace = run_circuit_trace(&cfg).unwrap();
    let dtheta = cfg.scale.delta_theta();
    let mut outside = 0;
    for (k, p) in trace.p1().iter().enumerate() {
        let exact = (k as f64 * dtheta).cos().powi(2);
        let sigma = (exact * (1.0 - exact) / 8192.0).sqrt();
        let dev = (p - exact).abs();
        if dev > 3.0 * sigma + 1e-12 {
            outside += 1;
        }
        // family-wise bound over 151 points
        assert!(dev <= 4.5 * sigma + 1e-12, "step {k}: {p} vs {exact}");
    }
    assert!(
        outside * 100 <= trace.len(),
        "{outside} of {} steps outside 3σ",
        trace.len()
    );
}

#[test]
fn zero_damping_ignores_the_noise_model() {
    let noisy = CircuitConfig {
        seed: 5,
        ..CircuitConfig::default()
    };
    let clean = CircuitConfig {
        noise: NoiseModel::ideal(),
        ..noisy.clone()
    };
    assert_eq!(
        run_circuit_trace(&noisy).unwrap().populations,
        run_circuit_trace(&clean).unwrap().populations
    );
}

#[test]
fn strong_swap_damping_equilibrates() {
    let trace = run_circuit_trace(&CircuitConfig {
        d: 18.0,
        ..CircuitConfig::default()
    })
    .unwrap();
    let last = *trace.p1().last().unwrap();
    assert!((last - 0.5).abs() < 0.05, "{last}");
    assert_eq!(trace.provenance.insertions, Some(108));
}

#[test]
fn layouts_agree_without_noise() {
    for seq in SequenceKind::ALL {
        let base = CircuitConfig {
            d: 6.0,
            sequence: seq,
            noise: NoiseModel::ideal(),
            shots: None,
            n_steps: 60,
            ..CircuitConfig::default()
        };
        let a = run_circuit_trace(&base).unwrap();
        let b = run_circuit_trace(&CircuitConfig {
            layout: Layout::Prepended,
            ..base
        })
        .unwrap();
        for (x, y) in a.p1().iter().zip(b.p1()) {
            assert!((x - y).abs() < 1e-10, "{seq}");
        }
    }
}

fn dominant_frequency(t_ps: &[f64], y: &[f64], omegas: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in t_ps.iter().zip(y) {
            re += (v - mean) * (w * t).cos();
            im += (v - mean) * (w * t).sin();
        }
        re * re + im * im
    };
    omegas
        .iter()
        .copied()
        .max_by(|a, b| power(*a).total_cmp(&power(*b)))
        .unwrap()
}

/// Frequencies (rad/ps) present in one-exciton populations under the
/// averaged generator ½(XX+YY) + (h/2)(X₁+X₂), with `h` the over-rotation
/// angle per unit propagation angle.
fn drift_frequencies(h: f64, theta_rate: f64) -> Vec<f64> {
    let x1 = kron(&identity(2), &pauli_x());
    let x2 = kron(&pauli_x(), &identity(2));
    let xx = kron(&pauli_x(), &pauli_x());
    let yy = kron(&pauli_y(), &pauli_y());
    let g: CMatrix =
        (xx + yy) * Complex64::new(0.5, 0.0) + (x1 + x2) * Complex64::new(0.5 * h, 0.0);
    let e = g.symmetric_eigenvalues();
    let mut out = Vec::new();
    for i in 0..4 {
        for j in (i + 1)..4 {
            out.push((e[i] - e[j]).abs() * theta_rate);
        }
    }
    out
}

#[test]
fn x2_overrotation_drift_shifts_the_frequency() {
    let eps = 0.02;
    let cfg = CircuitConfig {
        d: 70.0,
        sequence: SequenceKind::X2,
        noise: NoiseModel::coherent_only(eps, 0.0),
        shots: None,
        n_steps: 1000,
        ..CircuitConfig::default()
    };
    let trace = run_circuit_trace(&cfg).unwrap();
    let t = trace.times_ps();
    let theta_rate = cfg.scale.delta_theta() / (cfg.scale.dt_fs * 1e-3);
    let h = 2.0 * eps * cfg.d / (cfg.delta_t_d as f64 * cfg.scale.delta_theta());
    let predicted = drift_frequencies(h, theta_rate);
    let grid: Vec<f64> = (1..4000).map(|i| i as f64 * 0.05).collect();
    let peak = dominant_frequency(&t, &trace.p1(), &grid);
    let unperturbed = 2.0 * theta_rate;
    let resolution = 2.0 * std::f64::consts::PI / t[t.len() - 1];
    assert!(
        (peak - unperturbed).abs() > resolution,
        "peak {peak:.2} at the coherent frequency"
    );
    let nearest = predicted
        .iter()
        .map(|w| (w - peak).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(
        nearest < resolution,
        "peak {peak:.2}, predicted {predicted:?}"
    );
}
