//! Dense density-matrix simulator: unitary gates, Kraus channels, noisy
//! circuit execution and shot sampling.

mod channel;
mod gate;
pub(crate) mod sampling;
mod state;

pub use channel::{KrausChannel, COMPLETENESS_TOL};
pub use gate::{
    distance_from_identity, embed, identity, is_unitary, kron, pauli_x, pauli_y, pauli_z,
    phase_distance, rx, rz, CMatrix, Gate, GateKind,
};
pub use sampling::{apply_readout_error, sample_counts, Counts};
pub use state::{DensityMatrix, HERMITIAN_TOL, MAX_QUBITS, POSITIVITY_TOL, TRACE_TOL};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noisegen::{gate_error_channels, NoiseModel};

/// One circuit element. `ideal` instructions bypass the noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub gate: Gate,
    pub ideal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<Instruction>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            ops: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn push(&mut self, gate: Gate) {
        self.ops.push(Instruction { gate, ideal: false });
    }

    pub fn push_ideal(&mut self, gate: Gate) {
        self.ops.push(Instruction { gate, ideal: true });
    }

    pub fn append(&mut self, other: &Circuit) {
        self.ops.extend(other.ops.iter().cloned());
    }

    /// Marks every instruction ideal (or noisy).
    pub fn with_ideal(mut self, ideal: bool) -> Self {
        for op in &mut self.ops {
            op.ideal = ideal;
        }
        self
    }

    /// Noiseless unitary of the whole circuit.
    pub fn unitary(&self) -> CMatrix {
        let dim = 1usize << self.n_qubits;
        self.ops.iter().fold(identity(dim), |acc, op| {
            embed(&op.gate.matrix(), &op.gate.qubits, self.n_qubits) * acc
        })
    }
}

fn check_targets(qubits: &[usize], n_qubits: usize) -> Result<()> {
    if let Some(q) = qubits.iter().find(|&&q| q >= n_qubits) {
        return Err(Error::Shape(format!(
            "qubit {q} outside a {n_qubits}-qubit register"
        )));
    }
    Ok(())
}

/// `op · m` with `op` acting on `qubits` of the register indexing `m`'s rows.
fn left_apply(m: &CMatrix, op: &CMatrix, qubits: &[usize]) -> CMatrix {
    let dim = m.nrows();
    let kdim = op.nrows();
    let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
    let offsets: Vec<usize> = (0..kdim)
        .map(|l| {
            qubits
                .iter()
                .enumerate()
                .fold(0, |acc, (j, &q)| acc | (((l >> j) & 1) << q))
        })
        .collect();
    let mut out = CMatrix::zeros(dim, dim);
    let mut v = vec![Complex64::new(0.0, 0.0); kdim];
    for rest in (0..dim).filter(|r| r & mask == 0) {
        for col in 0..dim {
            for (l, off) in offsets.iter().enumerate() {
                v[l] = m[(rest | off, col)];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (l, vl) in v.iter().enumerate() {
                    acc += op[(r, l)] * vl;
                }
                out[(rest | off, col)] = acc;
            }
        }
    }
    out
}

fn conjugate(m: &CMatrix, op: &CMatrix, qubits: &[usize]) -> CMatrix {
    // U ρ U† = (U (U ρ)†)†
    let a = left_apply(m, op, qubits);
    left_apply(&a.adjoint(), op, qubits).adjoint()
}

/// `ρ ↦ UρU†`.
pub fn apply_gate(rho: &DensityMatrix, g: &Gate) -> Result<DensityMatrix> {
    check_targets(&g.qubits, rho.n_qubits())?;
    let m = g.matrix();
    if m.nrows() != 1 << g.qubits.len() {
        return Err(Error::Shape(
            "gate matrix does not match its qubit list".into(),
        ));
    }
    Ok(DensityMatrix::from_raw(
        rho.n_qubits(),
        conjugate(rho.matrix(), &m, &g.qubits),
    ))
}

/// `ρ ↦ Σ KρK†`, with the channel acting on `qubits`.
pub fn apply_channel(
    rho: &DensityMatrix,
    ch: &KrausChannel,
    qubits: &[usize],
) -> Result<DensityMatrix> {
    check_targets(qubits, rho.n_qubits())?;
    if ch.arity() != qubits.len() {
        return Err(Error::Shape(format!(
            "{}-qubit channel applied to {} qubit(s)",
            ch.arity(),
            qubits.len()
        )));
    }
    let err = ch.completeness_error();
    if err > COMPLETENESS_TOL {
        return Err(Error::Channel(format!(
            "Σ K†K deviates from identity by {err:.3e}"
        )));
    }
    let dim = rho.dim();
    let mut acc = CMatrix::zeros(dim, dim);
    for k in ch.operators() {
        let a = left_apply(rho.matrix(), k, qubits);
        acc += left_apply(&a.adjoint(), k, qubits);
    }
    let mut out = DensityMatrix::from_raw(rho.n_qubits(), acc.adjoint());
    symmetrize(out.data_mut());
    Ok(out)
}

fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Executes `circ` on `rho0`. Each non-ideal gate is replaced by its noisy
/// realisation from the noise model: error unitaries followed by their
/// channels. Virtual Z rotations never pick up noise.
pub fn run_circuit(
    circ: &Circuit,
    noise: &NoiseModel,
    rho0: &DensityMatrix,
) -> Result<DensityMatrix> {
    if circ.n_qubits() != rho0.n_qubits() {
        return Err(Error::Shape(format!(
            "circuit has {} qubits, state has {}",
            circ.n_qubits(),
            rho0.n_qubits()
        )));
    }
    let mut rho = rho0.clone();
    for op in circ.instructions() {
        if op.ideal {
            rho = apply_gate(&rho, &op.gate)?;
            continue;
        }
        for step in gate_error_channels(&op.gate, noise)? {
            rho = apply_gate(&rho, &step.unitary)?;
            for (ch, qubits) in &step.channels {
                rho = apply_channel(&rho, ch, qubits)?;
            }
        }
    }
    Ok(rho)
}
