//! Gate-error model, the identity-contracting "decoherence-inducing" gate
//! words, and the schedule that splices them into propagation circuits.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exciton::dimer_propagator_circuit;
use crate::qsim::{identity, rx, rz, CMatrix, Circuit, Gate, GateKind, KrausChannel};

/// Default decoherence period, in propagation steps.
pub const DEFAULT_DECOHERENCE_PERIOD: u32 = 25;

/// Two-qubit error scale found by [`crate::analysis::calibrate_noise`] for the
/// SWAP² anchors at the default parameters; see [`NoiseModel::calibrated`].
pub const CALIBRATED_DEPOL2_P: f64 = 0.0042;

/// Per-gate-kind error parameters.
///
/// A physical X pulse is realised as `Rz(δ/2)·Rx(π+ε)·Rz(δ/2)` followed by
/// single-qubit depolarizing and amplitude damping. Each CNOT is followed by
/// two-qubit depolarizing, a phase flip on both qubits with probability
/// `cnot_dephasing_ratio · depol2_p`, and amplitude damping on both qubits.
/// Virtual Z rotations are frame changes and stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Coherent X over-rotation ε (rad).
    pub x_overrotation_eps: f64,
    /// Residual phase error δ of the X pulse (rad).
    pub x_phase_delta: f64,
    pub depol1_p: f64,
    pub depol2_p: f64,
    /// Phase-flip probability per qubit per CNOT, in units of `depol2_p`.
    pub cnot_dephasing_ratio: f64,
    pub amp_damping_gamma: f64,
    pub readout_flip_p: f64,
    /// Always true; kept so configuration files state it explicitly.
    pub virtual_z_noiseless: bool,
    /// Whether the propagator's own gates carry noise.
    pub noisy_propagator: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            x_overrotation_eps: 0.02,
            x_phase_delta: 0.005,
            depol1_p: 0.001,
            depol2_p: 0.01,
            cnot_dephasing_ratio: 3.0,
            amp_damping_gamma: 5e-4,
            readout_flip_p: 0.0,
            virtual_z_noiseless: true,
            noisy_propagator: false,
        }
    }
}

impl NoiseModel {
    /// Every error switched off.
    pub fn ideal() -> Self {
        Self {
            x_overrotation_eps: 0.0,
            x_phase_delta: 0.0,
            depol1_p: 0.0,
            depol2_p: 0.0,
            cnot_dephasing_ratio: 0.0,
            amp_damping_gamma: 0.0,
            readout_flip_p: 0.0,
            virtual_z_noiseless: true,
            noisy_propagator: false,
        }
    }

    /// Only the coherent X-pulse errors.
    pub fn coherent_only(eps: f64, delta: f64) -> Self {
        Self {
            x_overrotation_eps: eps,
            x_phase_delta: delta,
            ..Self::ideal()
        }
    }

    /// Defaults with the two-qubit error scale fixed by the SWAP² calibration.
    pub fn calibrated() -> Self {
        Self::default().with_depol2(CALIBRATED_DEPOL2_P)
    }

    pub fn with_depol2(mut self, p: f64) -> Self {
        self.depol2_p = p;
        self
    }

    /// Phase-flip probability applied to each CNOT qubit.
    pub fn cnot_dephasing_p(&self) -> f64 {
        (self.cnot_dephasing_ratio * self.depol2_p).min(1.0)
    }

    pub fn is_ideal(&self) -> bool {
        self.x_overrotation_eps == 0.0
            && self.x_phase_delta == 0.0
            && self.depol1_p == 0.0
            && self.depol2_p == 0.0
            && self.amp_damping_gamma == 0.0
            && self.readout_flip_p == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("depol1_p", self.depol1_p),
            ("depol2_p", self.depol2_p),
            ("amp_damping_gamma", self.amp_damping_gamma),
            ("readout_flip_p", self.readout_flip_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        if !(self.cnot_dephasing_ratio >= 0.0) {
            return Err(Error::Parameter(
                "cnot_dephasing_ratio must be non-negative".into(),
            ));
        }
        for (name, a) in [
            ("x_overrotation_eps", self.x_overrotation_eps),
            ("x_phase_delta", self.x_phase_delta),
        ] {
            if !(a > -PI && a < PI) {
                return Err(Error::Parameter(format!("{name} = {a} outside (−π, π)")));
            }
        }
        if !self.virtual_z_noiseless {
            return Err(Error::Parameter(
                "virtual Z gates are always noiseless".into(),
            ));
        }
        Ok(())
    }
}

/// A gate as executed under noise: an (error-carrying) unitary followed by
/// stochastic channels on the listed qubits.
#[derive(Debug, Clone)]
pub struct NoisyGate {
    pub unitary: Gate,
    pub channels: Vec<(KrausChannel, Vec<usize>)>,
}

fn single_qubit_channels(q: usize, nm: &NoiseModel) -> Result<Vec<(KrausChannel, Vec<usize>)>> {
    let mut out = Vec::new();
    if nm.depol1_p > 0.0 {
        out.push((KrausChannel::depolarizing(nm.depol1_p)?, vec![q]));
    }
    if nm.amp_damping_gamma > 0.0 {
        out.push((
            KrausChannel::amplitude_damping(nm.amp_damping_gamma)?,
            vec![q],
        ));
    }
    Ok(out)
}

fn noisy_cnot(control: usize, target: usize, nm: &NoiseModel) -> Result<NoisyGate> {
    let mut channels = Vec::new();
    if nm.depol2_p > 0.0 {
        channels.push((
            KrausChannel::depolarizing2(nm.depol2_p)?,
            vec![control, target],
        ));
    }
    let dephase = nm.cnot_dephasing_p();
    if dephase > 0.0 {
        let ch = KrausChannel::phase_flip(dephase)?;
        channels.push((ch.clone(), vec![control]));
        channels.push((ch, vec![target]));
    }
    if nm.amp_damping_gamma > 0.0 {
        let ch = KrausChannel::amplitude_damping(nm.amp_damping_gamma)?;
        channels.push((ch.clone(), vec![control]));
        channels.push((ch, vec![target]));
    }
    Ok(NoisyGate {
        unitary: Gate::cnot(control, target),
        channels,
    })
}

/// Coherent part of a physical X pulse.
pub fn noisy_x_matrix(eps: f64, delta: f64) -> CMatrix {
    rz(delta / 2.0) * rx(PI + eps) * rz(delta / 2.0)
}

/// Noisy realisation of `g`, in execution order. A SWAP expands into three
/// CNOTs, each with its own errors.
pub fn gate_error_channels(g: &Gate, nm: &NoiseModel) -> Result<Vec<NoisyGate>> {
    let q = g.qubits[0];
    let steps = match &g.kind {
        GateKind::Z | GateKind::Rz(_) => vec![NoisyGate {
            unitary: g.clone(),
            channels: Vec::new(),
        }],
        GateKind::X => {
            let unitary = if nm.x_overrotation_eps == 0.0 && nm.x_phase_delta == 0.0 {
                g.clone()
            } else {
                Gate::unitary(
                    noisy_x_matrix(nm.x_overrotation_eps, nm.x_phase_delta),
                    vec![q],
                )?
            };
            vec![NoisyGate {
                unitary,
                channels: single_qubit_channels(q, nm)?,
            }]
        }
        GateKind::H | GateKind::Rx(_) => {
            vec![NoisyGate {
                unitary: g.clone(),
                channels: single_qubit_channels(q, nm)?,
            }]
        }
        GateKind::Cnot => vec![noisy_cnot(g.qubits[0], g.qubits[1], nm)?],
        GateKind::Swap => {
            let (a, b) = (g.qubits[0], g.qubits[1]);
            vec![
                noisy_cnot(a, b, nm)?,
                noisy_cnot(b, a, nm)?,
                noisy_cnot(a, b, nm)?,
            ]
        }
        // custom unitaries have no calibrated error model
        GateKind::Unitary(_) => vec![NoisyGate {
            unitary: g.clone(),
            channels: Vec::new(),
        }],
    };
    Ok(steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceKind {
    #[serde(rename = "X2")]
    X2,
    #[serde(rename = "XZ2")]
    Xz2,
    #[serde(rename = "XZXZZ2")]
    Xzxzz2,
    #[serde(rename = "SWAP2")]
    Swap2,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 4] = [Self::X2, Self::Xz2, Self::Xzxzz2, Self::Swap2];

    pub fn is_two_qubit(self) -> bool {
        self == Self::Swap2
    }

    /// Single-qubit word as a pulse string, e.g. `"XZXZ"`.
    fn word(self) -> &'static str {
        match self {
            Self::X2 => "XX",
            Self::Xz2 => "XZXZ",
            Self::Xzxzz2 => "XZXZZXZXZZ",
            Self::Swap2 => "",
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::X2 => "X2",
            Self::Xz2 => "XZ2",
            Self::Xzxzz2 => "XZXZZ2",
            Self::Swap2 => "SWAP2",
        })
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "X2" => Ok(Self::X2),
            "XZ2" => Ok(Self::Xz2),
            "XZXZZ2" => Ok(Self::Xzxzz2),
            "SWAP2" => Ok(Self::Swap2),
            other => Err(Error::Parameter(format!("unknown gate sequence {other:?}"))),
        }
    }
}

/// One identity-contracting gate word on specific qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateSequence {
    pub kind: SequenceKind,
    pub qubits: Vec<usize>,
}

impl GateSequence {
    pub fn new(kind: SequenceKind, qubits: Vec<usize>) -> Result<Self> {
        let want = if kind.is_two_qubit() { 2 } else { 1 };
        if qubits.len() != want || (want == 2 && qubits[0] == qubits[1]) {
            return Err(Error::Shape(format!(
                "{kind} needs {want} distinct qubit(s)"
            )));
        }
        Ok(Self { kind, qubits })
    }
}

pub fn expand_sequence(seq: &GateSequence) -> Vec<Gate> {
    match seq.kind {
        SequenceKind::Swap2 => {
            let (a, b) = (seq.qubits[0], seq.qubits[1]);
            (0..2)
                .flat_map(|_| [Gate::cnot(a, b), Gate::cnot(b, a), Gate::cnot(a, b)])
                .collect()
        }
        kind => {
            let q = seq.qubits[0];
            kind.word()
                .chars()
                .map(|ch| if ch == 'X' { Gate::x(q) } else { Gate::z(q) })
                .collect()
        }
    }
}

/// Product of the coherent error unitaries of a word, on the word's own
/// qubits (relabelled `0..k`). Stochastic channels are ignored.
pub fn word_unitary(kind: SequenceKind, nm: &NoiseModel) -> Result<CMatrix> {
    let seq = if kind.is_two_qubit() {
        GateSequence::new(kind, vec![0, 1])?
    } else {
        GateSequence::new(kind, vec![0])?
    };
    let n = seq.qubits.len();
    let mut circ = Circuit::new(n);
    for g in expand_sequence(&seq) {
        for step in gate_error_channels(&g, nm)? {
            circ.push_ideal(step.unitary);
        }
    }
    Ok(if circ.is_empty() {
        identity(1 << n)
    } else {
        circ.unitary()
    })
}

/// Gates inserted for one dissipation event on a two-qubit register.
/// Single-qubit words act on both qubits.
pub fn dissipation_block(kind: SequenceKind) -> Vec<Gate> {
    if kind.is_two_qubit() {
        expand_sequence(&GateSequence {
            kind,
            qubits: vec![0, 1],
        })
    } else {
        (0..2)
            .flat_map(|q| {
                expand_sequence(&GateSequence {
                    kind,
                    qubits: vec![q],
                })
            })
            .collect()
    }
}

/// When each dissipation block is spliced in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationSchedule {
    pub d: f64,
    pub delta_t_d: u32,
    pub n_steps: usize,
    /// `insertions[s-1]` blocks are inserted at step `s`.
    insertions: Vec<u32>,
}

/// Cumulative block count `⌊d·s/ΔT_D⌋` through step `s`.
fn cumulative_insertions(d: f64, step: usize, delta_t_d: u32) -> u64 {
    // the nudge keeps exact products like 0.3·250/25 on the right side of the floor
    (d * step as f64 / delta_t_d as f64 + 1e-9).floor() as u64
}

pub fn build_schedule(d: f64, n_steps: usize, delta_t_d: u32) -> Result<DissipationSchedule> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Parameter(format!(
            "damping coefficient must be non-negative, got {d}"
        )));
    }
    if n_steps == 0 {
        return Err(Error::Parameter("n_steps must be at least 1".into()));
    }
    if delta_t_d == 0 {
        return Err(Error::Parameter(
            "decoherence period must be at least one step".into(),
        ));
    }
    let insertions = (1..=n_steps)
        .map(|s| {
            (cumulative_insertions(d, s, delta_t_d) - cumulative_insertions(d, s - 1, delta_t_d))
                as u32
        })
        .collect();
    Ok(DissipationSchedule {
        d,
        delta_t_d,
        n_steps,
        insertions,
    })
}

impl DissipationSchedule {
    /// Blocks inserted at step `s` (1-based); zero for step 0.
    pub fn insertions_at(&self, step: usize) -> u32 {
        if step == 0 || step > self.n_steps {
            0
        } else {
            self.insertions[step - 1]
        }
    }

    pub fn cumulative(&self, step: usize) -> u64 {
        self.insertions[..step.min(self.n_steps)]
            .iter()
            .map(|&n| n as u64)
            .sum()
    }

    /// Total insertion count `N_I` over the whole run.
    pub fn total(&self) -> u64 {
        self.cumulative(self.n_steps)
    }
}

/// Where dissipation blocks sit relative to the propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Each block acts at the start of its scheduled step, between propagator
    /// segments.
    #[default]
    Interleaved,
    /// All blocks first, then a single propagator for the full angle.
    Prepended,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interleaved" => Ok(Self::Interleaved),
            "prepended" => Ok(Self::Prepended),
            other => Err(Error::Parameter(format!("unknown layout {other:?}"))),
        }
    }
}

/// Full two-qubit circuit for time point `step`: scheduled dissipation blocks
/// and the dimer propagator for angle `step·theta_per_step`. Consecutive
/// propagation steps without insertions are merged into one propagator.
pub fn build_dissipative_circuit(
    step: usize,
    schedule: &DissipationSchedule,
    seq: SequenceKind,
    theta_per_step: f64,
    layout: Layout,
    noisy_propagator: bool,
) -> Result<Circuit> {
    if step > schedule.n_steps {
        return Err(Error::Parameter(format!(
            "step {step} beyond the schedule's {} steps",
            schedule.n_steps
        )));
    }
    let block = dissipation_block(seq);
    let mut circ = Circuit::new(2);
    let propagate = |circ: &mut Circuit, n: usize| {
        if n > 0 {
            let p =
                dimer_propagator_circuit(n as f64 * theta_per_step).with_ideal(!noisy_propagator);
            circ.append(&p);
        }
    };
    match layout {
        Layout::Prepended => {
            for _ in 0..schedule.cumulative(step) {
                block.iter().for_each(|g| circ.push(g.clone()));
            }
            propagate(&mut circ, step);
        }
        Layout::Interleaved => {
            let mut pending = 0;
            for s in 1..=step {
                let n = schedule.insertions_at(s);
                if n > 0 {
                    propagate(&mut circ, pending);
                    pending = 0;
                    for _ in 0..n {
                        block.iter().for_each(|g| circ.push(g.clone()));
                    }
                }
                pending += 1;
            }
            propagate(&mut circ, pending);
        }
    }
    Ok(circ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{distance_from_identity, phase_distance, run_circuit, DensityMatrix};

    #[test]
    fn expansion_lengths() {
        let len = |k, q: Vec<usize>| expand_sequence(&GateSequence::new(k, q).unwrap()).len();
        assert_eq!(len(SequenceKind::X2, vec![0]), 2);
        assert_eq!(len(SequenceKind::Xz2, vec![0]), 4);
        assert_eq!(len(SequenceKind::Xzxzz2, vec![0]), 10);
        assert_eq!(len(SequenceKind::Swap2, vec![0, 1]), 6);
    }

    #[test]
    fn xzxzz2_word_layout() {
        let gates = expand_sequence(&GateSequence::new(SequenceKind::Xzxzz2, vec![0]).unwrap());
        let s: String = gates
            .iter()
            .map(|g| if g.kind == GateKind::X { 'X' } else { 'Z' })
            .collect();
        assert_eq!(s, "XZXZZXZXZZ");
    }

    #[test]
    fn swap2_is_six_cnots() {
        let gates = expand_sequence(&GateSequence::new(SequenceKind::Swap2, vec![0, 1]).unwrap());
        assert!(gates.iter().all(|g| g.kind == GateKind::Cnot));
    }

    #[test]
    fn sequence_arity_checked() {
        assert!(GateSequence::new(SequenceKind::Swap2, vec![0]).is_err());
        assert!(GateSequence::new(SequenceKind::X2, vec![0, 1]).is_err());
    }

    #[test]
    fn ideal_x_has_no_channels() {
        let steps = gate_error_channels(&Gate::x(0), &NoiseModel::ideal()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].unitary, Gate::x(0));
        assert!(steps[0].channels.is_empty());
    }

    #[test]
    fn virtual_z_is_never_noisy() {
        let nm = NoiseModel {
            depol1_p: 0.5,
            amp_damping_gamma: 0.5,
            ..NoiseModel::default()
        };
        for g in [Gate::z(0), Gate::rz(1, 0.3)] {
            let steps = gate_error_channels(&g, &nm).unwrap();
            assert_eq!(steps.len(), 1);
            assert!(steps[0].channels.is_empty());
            assert_eq!(steps[0].unitary, g);
        }
    }

    #[test]
    fn x2_with_overrotation_is_rx_of_twice_eps() {
        let u = word_unitary(SequenceKind::X2, &NoiseModel::coherent_only(0.02, 0.0)).unwrap();
        assert!(phase_distance(&u, &rx(0.04)) < 1e-12);
    }

    #[test]
    fn schedule_d1() {
        let s = build_schedule(1.0, 150, 25).unwrap();
        assert_eq!(s.total(), 6);
        for step in 1..=150 {
            assert_eq!(s.insertions_at(step), u32::from(step % 25 == 0));
        }
    }

    #[test]
    fn schedule_zero_and_dense() {
        let s = build_schedule(0.0, 150, 25).unwrap();
        assert_eq!(s.total(), 0);
        let s = build_schedule(50.0, 150, 25).unwrap();
        assert_eq!(s.insertions_at(1), 2);
        assert_eq!(s.total(), 300);
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        assert!(matches!(
            build_schedule(-1.0, 10, 25),
            Err(Error::Parameter(_))
        ));
        assert!(build_schedule(1.0, 0, 25).is_err());
        assert!(build_schedule(f64::NAN, 10, 25).is_err());
    }

    #[test]
    fn fractional_d_uses_floor() {
        let s = build_schedule(0.3, 250, 25).unwrap();
        assert_eq!(s.total(), 3);
        assert_eq!(s.cumulative(83), 0);
        assert_eq!(s.cumulative(84), 1);
    }

    #[test]
    fn circuit_block_counts() {
        let s = build_schedule(1.0, 150, 25).unwrap();
        let theta = 0.03767;
        let circ = build_dissipative_circuit(
            25,
            &s,
            SequenceKind::Swap2,
            theta,
            Layout::Interleaved,
            false,
        )
        .unwrap();
        let noisy = circ.instructions().iter().filter(|op| !op.ideal).count();
        assert_eq!(noisy, 6);
        let circ = build_dissipative_circuit(
            10,
            &s,
            SequenceKind::Swap2,
            theta,
            Layout::Interleaved,
            false,
        )
        .unwrap();
        assert!(circ.instructions().iter().all(|op| op.ideal));
        assert!(
            phase_distance(
                &circ.unitary(),
                &dimer_propagator_circuit(10.0 * theta).unitary()
            ) < 1e-12
        );
    }

    #[test]
    fn prepended_layout_puts_blocks_first() {
        let s = build_schedule(1.0, 150, 25).unwrap();
        let circ = build_dissipative_circuit(
            25,
            &s,
            SequenceKind::Swap2,
            0.03767,
            Layout::Prepended,
            false,
        )
        .unwrap();
        let ops = circ.instructions();
        assert!(ops[..6]
            .iter()
            .all(|op| !op.ideal && op.gate.kind == GateKind::Cnot));
        assert!(ops[6..].iter().all(|op| op.ideal));
        let expect = dimer_propagator_circuit(25.0 * 0.03767).unitary();
        assert!(phase_distance(&circ.unitary(), &expect) < 1e-12);
    }

    #[test]
    fn step_beyond_schedule_rejected() {
        let s = build_schedule(1.0, 10, 25).unwrap();
        assert!(build_dissipative_circuit(
            11,
            &s,
            SequenceKind::X2,
            0.1,
            Layout::Interleaved,
            false
        )
        .is_err());
    }

    #[test]
    fn noiseless_dissipative_circuit_matches_coherent_propagation() {
        let theta = 0.03767;
        for kind in SequenceKind::ALL {
            let s = build_schedule(18.0, 60, 25).unwrap();
            let circ =
                build_dissipative_circuit(60, &s, kind, theta, Layout::Interleaved, true).unwrap();
            let rho = run_circuit(
                &circ,
                &NoiseModel::ideal(),
                &DensityMatrix::basis(2, 1).unwrap(),
            )
            .unwrap();
            let p = rho.probabilities();
            let p1 = p[1] / (p[1] + p[2]);
            assert!((p1 - (60.0 * theta).cos().powi(2)).abs() < 1e-12, "{kind}");
            assert!(
                distance_from_identity(&word_unitary(kind, &NoiseModel::ideal()).unwrap()) < 1e-12
            );
        }
    }

    #[test]
    fn noise_model_validation() {
        NoiseModel::default().validate().unwrap();
        NoiseModel::calibrated().validate().unwrap();
        let bad = NoiseModel {
            depol1_p: 1.5,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseModel {
            x_overrotation_eps: 4.0,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseModel {
            virtual_z_noiseless: false,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sequence_names_round_trip() {
        for kind in SequenceKind::ALL {
            assert_eq!(kind.to_string().parse::<SequenceKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{kind}\""));
        }
    }
}
