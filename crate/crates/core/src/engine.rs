//! Trace generators: the noisy circuit engine and the closed-system oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::renormalize_counts;
use crate::error::{Error, Result};
use crate::exciton::{
    build_one_exciton_hamiltonian, dimer_propagator_circuit, reference_propagate, ExcitonSystem,
};
use crate::noisegen::{
    build_dissipative_circuit, build_schedule, dissipation_block, DissipationSchedule, Layout,
    NoiseModel, SequenceKind, DEFAULT_DECOHERENCE_PERIOD,
};
use crate::qsim::sampling::{measurement_distribution, sample_distribution};
use crate::qsim::{apply_readout_error, run_circuit, Circuit, Counts, DensityMatrix};
use crate::trace::{Engine, PopulationTrace, Provenance};
use crate::units::{wavenumber_to_angular, EnergyScale};

pub const DEFAULT_STEPS: usize = 150;
pub const DEFAULT_SHOTS: u64 = 8192;

/// Everything the circuit engine needs for one damping coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitConfig {
    pub scale: EnergyScale,
    pub n_steps: usize,
    /// Initially excited site.
    pub p0: usize,
    pub d: f64,
    /// Decoherence period `ΔT_D` in propagation steps.
    pub delta_t_d: u32,
    pub sequence: SequenceKind,
    pub layout: Layout,
    pub noise: NoiseModel,
    /// `None` returns exact populations instead of sampled counts.
    pub shots: Option<u64>,
    pub seed: u64,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            scale: EnergyScale::default(),
            n_steps: DEFAULT_STEPS,
            p0: 0,
            d: 0.0,
            delta_t_d: DEFAULT_DECOHERENCE_PERIOD,
            sequence: SequenceKind::Swap2,
            layout: Layout::Interleaved,
            noise: NoiseModel::calibrated(),
            shots: Some(DEFAULT_SHOTS),
            seed: 0,
        }
    }
}

impl CircuitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p0 > 1 {
            return Err(Error::InvalidSystem(format!(
                "the circuit engine simulates a dimer; initial site {} does not exist",
                self.p0
            )));
        }
        if !(self.scale.j0_cm.is_finite() && self.scale.dt_fs > 0.0 && self.scale.dt_fs.is_finite())
        {
            return Err(Error::Parameter(format!(
                "invalid energy scale {:?}",
                self.scale
            )));
        }
        if self.shots == Some(0) {
            return Err(Error::Parameter("shots must be at least 1".into()));
        }
        self.noise.validate()
    }

    pub fn system(&self) -> ExcitonSystem {
        ExcitonSystem::symmetric_dimer(self.scale.j0_cm)
    }

    pub fn schedule(&self) -> Result<DissipationSchedule> {
        build_schedule(self.d, self.n_steps, self.delta_t_d)
    }

    fn initial_state(&self) -> Result<DensityMatrix> {
        DensityMatrix::basis(2, 1 << self.p0)
    }

    /// Whether the state at step `s` can be obtained from step `s-1` by
    /// appending gates, which holds when merged propagators are exact.
    fn incremental(&self) -> bool {
        self.layout == Layout::Interleaved && !self.noise.noisy_propagator
    }
}

/// Density matrices at every step, computed one step from the previous.
fn states_incremental(
    cfg: &CircuitConfig,
    schedule: &DissipationSchedule,
) -> Result<Vec<DensityMatrix>> {
    let block = dissipation_block(cfg.sequence);
    let prop = dimer_propagator_circuit(cfg.scale.delta_theta()).with_ideal(true);
    let mut rho = cfg.initial_state()?;
    let mut out = Vec::with_capacity(cfg.n_steps + 1);
    out.push(rho.clone());
    for s in 1..=cfg.n_steps {
        let mut circ = Circuit::new(2);
        for _ in 0..schedule.insertions_at(s) {
            block.iter().for_each(|g| circ.push(g.clone()));
        }
        circ.append(&prop);
        rho = run_circuit(&circ, &cfg.noise, &rho)?;
        out.push(rho.clone());
    }
    Ok(out)
}

/// Density matrices at every step, each from its own full circuit.
pub fn states_direct(cfg: &CircuitConfig) -> Result<Vec<DensityMatrix>> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let rho0 = cfg.initial_state()?;
    (0..=cfg.n_steps)
        .into_par_iter()
        .map(|s| {
            let circ = build_dissipative_circuit(
                s,
                &schedule,
                cfg.sequence,
                cfg.scale.delta_theta(),
                cfg.layout,
                cfg.noise.noisy_propagator,
            )?;
            run_circuit(&circ, &cfg.noise, &rho0)
        })
        .collect()
}

pub fn circuit_states(cfg: &CircuitConfig) -> Result<Vec<DensityMatrix>> {
    cfg.validate()?;
    if cfg.incremental() {
        states_incremental(cfg, &cfg.schedule()?)
    } else {
        states_direct(cfg)
    }
}

/// Runs the circuit engine. With shots, every step is measured with its own
/// ChaCha stream seeded by `seed ^ step`; the populations are the
/// renormalised one-exciton counts.
pub fn run_circuit_trace(cfg: &CircuitConfig) -> Result<PopulationTrace> {
    let schedule = cfg.schedule()?;
    let states = circuit_states(cfg)?;
    let rows: Vec<(Vec<f64>, f64, Option<Counts>)> = states
        .par_iter()
        .enumerate()
        .map(|(s, rho)| {
            let p = apply_readout_error(&measurement_distribution(rho)?, cfg.noise.readout_flip_p);
            match cfg.shots {
                Some(shots) => {
                    let counts = sample_distribution(&p, shots, cfg.seed ^ s as u64)?;
                    let (p1, p2) = renormalize_counts(&counts)?;
                    let leak = (counts.n00() + counts.n11()) as f64 / shots as f64;
                    Ok((vec![p1, p2], leak, Some(counts)))
                }
                None => {
                    let kept = p[1] + p[2];
                    if kept <= 0.0 {
                        return Err(Error::State(format!(
                            "no weight left in the one-exciton manifold at step {s}"
                        )));
                    }
                    Ok((vec![p[1] / kept, p[2] / kept], p[0] + p[3], None))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut provenance = Provenance::new(Engine::Circuit);
    provenance.d = Some(cfg.d);
    provenance.seed = Some(cfg.seed);
    provenance.shots = cfg.shots;
    provenance.sequence = Some(cfg.sequence);
    provenance.layout = Some(cfg.layout);
    provenance.noise = Some(cfg.noise);
    provenance.insertions = Some(schedule.total());
    let mut trace = PopulationTrace {
        steps: (0..=cfg.n_steps).collect(),
        times_fs: (0..=cfg.n_steps)
            .map(|s| cfg.scale.time_at_step(s))
            .collect(),
        thetas: (0..=cfg.n_steps)
            .map(|s| s as f64 * cfg.scale.delta_theta())
            .collect(),
        populations: Vec::with_capacity(rows.len()),
        leak_frac: Vec::with_capacity(rows.len()),
        counts: Vec::with_capacity(rows.len()),
        provenance,
    };
    for (p, leak, counts) in rows {
        trace.populations.push(p);
        trace.leak_frac.push(leak);
        trace.counts.push(counts);
    }
    Ok(trace)
}

/// Closed-system populations on `t = 0, dt, …, n_steps·dt`, from exact
/// diagonalisation of the one-exciton Hamiltonian.
pub fn oracle_trace(
    sys: &ExcitonSystem,
    p0: usize,
    dt_fs: f64,
    n_steps: usize,
) -> Result<PopulationTrace> {
    let h = build_one_exciton_hamiltonian(sys)?;
    let times_fs: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt_fs).collect();
    let phases: Vec<f64> = times_fs
        .iter()
        .map(|&t| wavenumber_to_angular(1.0) * t)
        .collect();
    let populations = reference_propagate(&h, p0, &phases)?;
    let omega = if sys.n_sites() > 1 {
        wavenumber_to_angular(sys.couplings[0][1].abs())
    } else {
        0.0
    };
    Ok(PopulationTrace {
        steps: (0..=n_steps).collect(),
        thetas: times_fs.iter().map(|t| omega * t).collect(),
        leak_frac: vec![0.0; n_steps + 1],
        counts: vec![None; n_steps + 1],
        populations,
        times_fs,
        provenance: Provenance::new(Engine::Oracle),
    })
}
