use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const UNITARY_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    /// Physical π pulse about x.
    X,
    /// Virtual Z: a frame change, never carries error.
    Z,
    /// `exp(-iθZ/2)`, realised as a frame change.
    Rz(f64),
    /// `exp(-iθX/2)`.
    Rx(f64),
    H,
    /// Control is the first qubit, target the second.
    Cnot,
    Swap,
    Unitary(CMatrix),
}

/// A gate and the qubits it acts on. Local matrices are little-endian in the
/// order of `qubits`: bit `j` of a local basis index is the state of `qubits[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>) -> Result<Self> {
        let arity = match &kind {
            GateKind::Cnot | GateKind::Swap => 2,
            GateKind::Unitary(m) => {
                let n = m.nrows();
                if !n.is_power_of_two() || m.ncols() != n || n < 2 {
                    return Err(Error::Shape(format!(
                        "custom unitary must be square with power-of-two size, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                if !is_unitary(m, UNITARY_TOL) {
                    return Err(Error::Numeric("custom gate matrix is not unitary".into()));
                }
                n.trailing_zeros() as usize
            }
            _ => 1,
        };
        if qubits.len() != arity {
            return Err(Error::Shape(format!(
                "gate {:?} acts on {} qubit(s) but {} were given",
                kind,
                arity,
                qubits.len()
            )));
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[..i].contains(q) {
                return Err(Error::Shape(format!("repeated qubit {q} in gate targets")));
            }
        }
        Ok(Self { kind, qubits })
    }

    pub fn x(q: usize) -> Self {
        Self {
            kind: GateKind::X,
            qubits: vec![q],
        }
    }

    pub fn z(q: usize) -> Self {
        Self {
            kind: GateKind::Z,
            qubits: vec![q],
        }
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self {
            kind: GateKind::Rz(theta),
            qubits: vec![q],
        }
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Self {
            kind: GateKind::Rx(theta),
            qubits: vec![q],
        }
    }

    pub fn h(q: usize) -> Self {
        Self {
            kind: GateKind::H,
            qubits: vec![q],
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        assert_ne!(control, target, "CNOT control and target must differ");
        Self {
            kind: GateKind::Cnot,
            qubits: vec![control, target],
        }
    }

    pub fn swap(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "SWAP qubits must differ");
        Self {
            kind: GateKind::Swap,
            qubits: vec![a, b],
        }
    }

    pub fn unitary(m: CMatrix, qubits: Vec<usize>) -> Result<Self> {
        Self::new(GateKind::Unitary(m), qubits)
    }

    pub fn arity(&self) -> usize {
        self.qubits.len()
    }

    /// Frame-change gates that no physical pulse implements.
    pub fn is_virtual(&self) -> bool {
        matches!(self.kind, GateKind::Z | GateKind::Rz(_))
    }

    /// Local matrix of the gate.
    pub fn matrix(&self) -> CMatrix {
        match &self.kind {
            GateKind::X => pauli_x(),
            GateKind::Z => pauli_z(),
            GateKind::Rz(t) => rz(*t),
            GateKind::Rx(t) => rx(*t),
            GateKind::H => {
                let s = c(FRAC_1_SQRT_2, 0.0);
                CMatrix::from_row_slice(2, 2, &[s, s, s, -s])
            }
            GateKind::Cnot => {
                // local index = control + 2·target
                let mut m = CMatrix::zeros(4, 4);
                m[(0, 0)] = c(1.0, 0.0);
                m[(2, 2)] = c(1.0, 0.0);
                m[(3, 1)] = c(1.0, 0.0);
                m[(1, 3)] = c(1.0, 0.0);
                m
            }
            GateKind::Swap => {
                let mut m = CMatrix::zeros(4, 4);
                m[(0, 0)] = c(1.0, 0.0);
                m[(3, 3)] = c(1.0, 0.0);
                m[(1, 2)] = c(1.0, 0.0);
                m[(2, 1)] = c(1.0, 0.0);
                m
            }
            GateKind::Unitary(m) => m.clone(),
        }
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn rx(theta: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
}

pub fn rz(theta: f64) -> CMatrix {
    let h = theta / 2.0;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::from_polar(1.0, -h),
            c(0.0, 0.0),
            c(0.0, 0.0),
            Complex64::from_polar(1.0, h),
        ],
    )
}

/// Kronecker product `a ⊗ b`; `b` is the less significant factor.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    let n = m.nrows();
    let p = m.adjoint() * m;
    (p - identity(n)).iter().all(|z| z.norm() <= tol)
}

/// Lifts a local operator on `qubits` to the full `n_qubits` register.
pub fn embed(local: &CMatrix, qubits: &[usize], n_qubits: usize) -> CMatrix {
    let dim = 1usize << n_qubits;
    let k = qubits.len();
    debug_assert_eq!(local.nrows(), 1 << k);
    if k == n_qubits && qubits.iter().enumerate().all(|(i, &q)| i == q) {
        return local.clone();
    }
    let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
    let local_index = |full: usize| -> usize {
        qubits
            .iter()
            .enumerate()
            .map(|(j, &q)| ((full >> q) & 1) << j)
            .sum()
    };
    let scatter = |rest: usize, loc: usize| -> usize {
        qubits
            .iter()
            .enumerate()
            .fold(rest, |acc, (j, &q)| acc | (((loc >> j) & 1) << q))
    };
    let mut full = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let rest = col & !mask;
        let lc = local_index(col);
        for lr in 0..(1usize << k) {
            let v = local[(lr, lc)];
            if v != Complex64::new(0.0, 0.0) {
                full[(scatter(rest, lr), col)] = v;
            }
        }
    }
    full
}

/// Frobenius distance from the nearest global-phase multiple of the identity,
/// `min_φ ‖U − e^{iφ}I‖_F = sqrt(2n − 2|tr U|)`.
pub fn distance_from_identity(u: &CMatrix) -> f64 {
    let n = u.nrows() as f64;
    (2.0 * n - 2.0 * u.trace().norm()).max(0.0).sqrt()
}

/// Frobenius distance between two unitaries modulo a global phase.
pub fn phase_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    distance_from_identity(&(b.adjoint() * a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gates_are_unitary() {
        for g in [
            Gate::x(0),
            Gate::z(0),
            Gate::rz(0, 0.3),
            Gate::rx(0, 1.1),
            Gate::h(0),
            Gate::cnot(0, 1),
            Gate::swap(0, 1),
        ] {
            assert!(is_unitary(&g.matrix(), 1e-12), "{:?}", g.kind);
        }
    }

    #[test]
    fn arity_mismatch_is_shape_error() {
        let err = Gate::new(GateKind::Cnot, vec![0]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = Gate::new(GateKind::X, vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn non_unitary_custom_gate_rejected() {
        let m = CMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(Gate::unitary(m, vec![0]).is_err());
    }

    #[test]
    fn embedding_matches_kronecker_order() {
        // qubit 0 is the least significant factor
        let x0 = embed(&pauli_x(), &[0], 2);
        assert_eq!(x0, kron(&identity(2), &pauli_x()));
        let x1 = embed(&pauli_x(), &[1], 2);
        assert_eq!(x1, kron(&pauli_x(), &identity(2)));
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        let full = embed(&Gate::cnot(0, 1).matrix(), &[0, 1], 2);
        // |q1 q0> = |01> (index 1) -> |11> (index 3)
        assert_eq!(full[(3, 1)], c(1.0, 0.0));
        let rev = embed(&Gate::cnot(1, 0).matrix(), &[1, 0], 2);
        // control q1: |10> (index 2) -> |11>
        assert_eq!(rev[(3, 2)], c(1.0, 0.0));
    }

    #[test]
    fn three_cnots_make_a_swap() {
        let a = embed(&Gate::cnot(0, 1).matrix(), &[0, 1], 2);
        let b = embed(&Gate::cnot(1, 0).matrix(), &[1, 0], 2);
        let swap = &a * &b * &a;
        assert_eq!(swap, Gate::swap(0, 1).matrix());
    }

    #[test]
    fn phase_insensitive_distance() {
        let u = pauli_x() * c(0.0, -1.0);
        assert!(phase_distance(&u, &pauli_x()) < 1e-12);
        assert!(distance_from_identity(&rx(0.0)) < 1e-12);
        assert!(distance_from_identity(&pauli_x()) > 1.0);
    }
}
