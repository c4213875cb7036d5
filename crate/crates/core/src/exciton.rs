//! Exciton Hamiltonians, their qubit encoding, and the closed-system oracle.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::qsim::{embed, identity, pauli_x, pauli_y, pauli_z, CMatrix, Circuit, Gate};

const SYMMETRY_TOL: f64 = 1e-12;

/// Sites with energies ε_i and pairwise couplings J_ij, both in cm⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitonSystem {
    pub site_energies: Vec<f64>,
    pub couplings: Vec<Vec<f64>>,
}

impl ExcitonSystem {
    pub fn new(site_energies: Vec<f64>, couplings: Vec<Vec<f64>>) -> Result<Self> {
        let sys = Self {
            site_energies,
            couplings,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Two degenerate sites coupled by `j0`.
    pub fn symmetric_dimer(j0: f64) -> Self {
        Self::dimer(0.0, 0.0, j0)
    }

    pub fn dimer(e1: f64, e2: f64, j: f64) -> Self {
        Self {
            site_energies: vec![e1, e2],
            couplings: vec![vec![0.0, j], vec![j, 0.0]],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.site_energies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.site_energies.len();
        if n == 0 {
            return Err(Error::InvalidSystem("no sites".into()));
        }
        if self.couplings.len() != n || self.couplings.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSystem(format!(
                "coupling matrix must be {n}x{n} to match the site energies"
            )));
        }
        for i in 0..n {
            if self.couplings[i][i] != 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "nonzero self-coupling J[{i}][{i}]"
                )));
            }
            for j in (i + 1)..n {
                if (self.couplings[i][j] - self.couplings[j][i]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidSystem(format!(
                        "coupling J[{i}][{j}] is not symmetric"
                    )));
                }
            }
        }
        if self
            .site_energies
            .iter()
            .chain(self.couplings.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidSystem("non-finite energy".into()));
        }
        Ok(())
    }

    /// True for a two-site system with equal site energies.
    pub fn is_symmetric_dimer(&self) -> bool {
        self.n_sites() == 2 && self.site_energies[0] == self.site_energies[1]
    }
}

/// One-exciton Hamiltonian: `H_ii = ε_i`, `H_ij = J_ij` (cm⁻¹).
pub fn build_one_exciton_hamiltonian(sys: &ExcitonSystem) -> Result<DMatrix<f64>> {
    sys.validate()?;
    let n = sys.n_sites();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            sys.site_energies[i]
        } else {
            sys.couplings[i][j]
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => identity(2),
            Pauli::X => pauli_x(),
            Pauli::Y => pauli_y(),
            Pauli::Z => pauli_z(),
        }
    }
}

/// `coefficient · ⊗ P_q`; qubits not listed carry the identity, so an empty
/// operator list is a multiple of the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub operators: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    pub fn identity(coefficient: f64) -> Self {
        Self {
            coefficient,
            operators: Vec::new(),
        }
    }

    pub fn new(coefficient: f64, operators: Vec<(usize, Pauli)>) -> Self {
        Self {
            coefficient,
            operators,
        }
    }

    /// Full `2ⁿ×2ⁿ` matrix on an `n_qubits` register.
    pub fn matrix(&self, n_qubits: usize) -> CMatrix {
        let mut m = identity(1 << n_qubits) * Complex64::new(self.coefficient, 0.0);
        for &(q, p) in &self.operators {
            m = embed(&p.matrix(), &[q], n_qubits) * m;
        }
        m
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.coefficient)?;
        if self.operators.is_empty() {
            return write!(f, "·I");
        }
        for (q, p) in &self.operators {
            write!(f, "·{:?}{}", p, q + 1)?;
        }
        Ok(())
    }
}

/// Hard-core exciton map: `a†ₙaₙ → ½(Iₙ − Zₙ)` and
/// `a†ₘaₙ + a†ₙaₘ → ½(XₘXₙ + YₘYₙ)`. Site `i` is qubit `i`. Energies pass
/// through unscaled, so unit-scaled inputs give dimensionless coefficients.
pub fn jordan_wigner_map(sys: &ExcitonSystem) -> Result<Vec<PauliTerm>> {
    sys.validate()?;
    let mut terms = Vec::new();
    let offset: f64 = sys.site_energies.iter().sum::<f64>() / 2.0;
    if offset != 0.0 {
        terms.push(PauliTerm::identity(offset));
    }
    for (n, &e) in sys.site_energies.iter().enumerate() {
        if e != 0.0 {
            terms.push(PauliTerm::new(-e / 2.0, vec![(n, Pauli::Z)]));
        }
    }
    let n = sys.n_sites();
    for m in 0..n {
        for k in (m + 1)..n {
            let j = sys.couplings[m][k];
            if j != 0.0 {
                terms.push(PauliTerm::new(j / 2.0, vec![(m, Pauli::X), (k, Pauli::X)]));
                terms.push(PauliTerm::new(j / 2.0, vec![(m, Pauli::Y), (k, Pauli::Y)]));
            }
        }
    }
    Ok(terms)
}

/// Sum of Pauli terms as a dense matrix on `n_qubits`.
pub fn pauli_sum_matrix(terms: &[PauliTerm], n_qubits: usize) -> CMatrix {
    let dim = 1 << n_qubits;
    terms
        .iter()
        .fold(CMatrix::zeros(dim, dim), |acc, t| acc + t.matrix(n_qubits))
}

/// Restriction of a register operator to the one-exciton states `|2^i⟩`.
pub fn project_one_exciton(op: &CMatrix, n_sites: usize) -> CMatrix {
    CMatrix::from_fn(n_sites, n_sites, |i, j| op[(1 << i, 1 << j)])
}

/// Closed-system populations `P_i(θ) = |⟨i|e^{−iHθ}|p0⟩|²` by exact
/// diagonalisation. `H·θ` must be dimensionless.
pub fn reference_propagate(h: &DMatrix<f64>, p0: usize, thetas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Numeric("Hamiltonian is not square".into()));
    }
    if (h - h.transpose()).iter().any(|x| x.abs() > SYMMETRY_TOL) {
        return Err(Error::Numeric("Hamiltonian is not symmetric".into()));
    }
    if p0 >= n {
        return Err(Error::Parameter(format!(
            "initial site {p0} outside {n} sites"
        )));
    }
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    Ok(thetas
        .iter()
        .map(|&theta| {
            (0..n)
                .map(|i| {
                    let amp: Complex64 = (0..n)
                        .map(|k| {
                            Complex64::from_polar(
                                v[(i, k)] * v[(p0, k)],
                                -eig.eigenvalues[k] * theta,
                            )
                        })
                        .sum();
                    amp.norm_sqr()
                })
                .collect()
        })
        .collect())
}

/// Two-qubit circuit for `exp(−iθ·½(X₁X₂ + Y₁Y₂))`.
///
/// The XX and YY parts commute, so the product of their exponentials is
/// exact. Each is a ZZ rotation (CNOT, `Rz(θ)` on the target, CNOT) in a
/// rotated basis: Hadamards for XX, `Rx(±π/2)` for YY.
pub fn dimer_propagator_circuit(theta: f64) -> Circuit {
    let mut c = Circuit::new(2);
    let zz = |c: &mut Circuit| {
        c.push(Gate::cnot(0, 1));
        c.push(Gate::rz(1, theta));
        c.push(Gate::cnot(0, 1));
    };
    c.push(Gate::h(0));
    c.push(Gate::h(1));
    zz(&mut c);
    c.push(Gate::h(0));
    c.push(Gate::h(1));
    c.push(Gate::rx(0, FRAC_PI_2));
    c.push(Gate::rx(1, FRAC_PI_2));
    zz(&mut c);
    c.push(Gate::rx(0, -FRAC_PI_2));
    c.push(Gate::rx(1, -FRAC_PI_2));
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::phase_distance;

    #[test]
    fn symmetric_dimer_matrix() {
        let h = build_one_exciton_hamiltonian(&ExcitonSystem::symmetric_dimer(1.0)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn uncoupled_sites_are_diagonal() {
        let h = build_one_exciton_hamiltonian(&ExcitonSystem::dimer(5.0, 5.0, 0.0)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 5.0]));
    }

    #[test]
    fn biased_dimer_eigenvalues() {
        let h = build_one_exciton_hamiltonian(&ExcitonSystem::dimer(0.0, 100.0, 100.0)).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        // 2×2 formula: mean ± sqrt(half-gap² + J²)
        let r = (50.0f64.powi(2) + 100.0f64.powi(2)).sqrt();
        assert!((ev[0] - (50.0 - r)).abs() < 1e-10);
        assert!((ev[1] - (50.0 + r)).abs() < 1e-10);
    }

    #[test]
    fn invalid_systems() {
        assert!(matches!(
            ExcitonSystem::new(vec![0.0, 0.0], vec![vec![0.0, 1.0]]),
            Err(Error::InvalidSystem(_))
        ));
        assert!(ExcitonSystem::new(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(ExcitonSystem::new(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(ExcitonSystem::new(vec![], vec![]).is_err());
    }

    #[test]
    fn dimer_jordan_wigner_terms() {
        let terms = jordan_wigner_map(&ExcitonSystem::symmetric_dimer(1.0)).unwrap();
        assert_eq!(
            terms,
            vec![
                PauliTerm::new(0.5, vec![(0, Pauli::X), (1, Pauli::X)]),
                PauliTerm::new(0.5, vec![(0, Pauli::Y), (1, Pauli::Y)]),
            ]
        );
    }

    #[test]
    fn single_site_number_operator() {
        let sys = ExcitonSystem::new(vec![1.0], vec![vec![0.0]]).unwrap();
        let terms = jordan_wigner_map(&sys).unwrap();
        assert_eq!(
            terms,
            vec![
                PauliTerm::identity(0.5),
                PauliTerm::new(-0.5, vec![(0, Pauli::Z)])
            ]
        );
    }

    #[test]
    fn biased_dimer_terms() {
        let terms = jordan_wigner_map(&ExcitonSystem::dimer(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(
            terms,
            vec![
                PauliTerm::identity(0.5),
                PauliTerm::new(-0.5, vec![(1, Pauli::Z)]),
                PauliTerm::new(0.5, vec![(0, Pauli::X), (1, Pauli::X)]),
                PauliTerm::new(0.5, vec![(0, Pauli::Y), (1, Pauli::Y)]),
            ]
        );
    }

    fn check_projection(sys: &ExcitonSystem) {
        let n = sys.n_sites();
        let full = pauli_sum_matrix(&jordan_wigner_map(sys).unwrap(), n);
        let proj = project_one_exciton(&full, n);
        let h = build_one_exciton_hamiltonian(sys).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((proj[(i, j)] - Complex64::new(h[(i, j)], 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn qubit_hamiltonian_reproduces_one_exciton_block() {
        check_projection(&ExcitonSystem::dimer(12.0, -30.0, 87.0));
        let sys = ExcitonSystem::new(
            vec![200.0, 320.0, 0.0],
            vec![
                vec![0.0, -87.7, 5.5],
                vec![-87.7, 0.0, 30.8],
                vec![5.5, 30.8, 0.0],
            ],
        )
        .unwrap();
        check_projection(&sys);
    }

    #[test]
    fn oracle_special_angles() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = reference_propagate(&h, 0, &[0.0, FRAC_PI_2, 0.03767 * 25.0]).unwrap();
        assert!((p[0][0] - 1.0).abs() < 1e-14);
        assert!(p[1][0].abs() < 1e-14 && (p[1][1] - 1.0).abs() < 1e-14);
        assert!((p[2][0] - 0.941_75f64.cos().powi(2)).abs() < 1e-12);
        assert!((p[2][0] - 0.3462).abs() < 1e-4);
    }

    #[test]
    fn oracle_rejects_asymmetric_h() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(
            reference_propagate(&h, 0, &[0.1]),
            Err(Error::Numeric(_))
        ));
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(reference_propagate(&h, 2, &[0.1]).is_err());
    }

    #[test]
    fn propagator_special_angles() {
        assert!(phase_distance(&dimer_propagator_circuit(0.0).unitary(), &identity(4)) < 1e-12);
        let u = dimer_propagator_circuit(FRAC_PI_2).unitary();
        // |10> (index 2) -> |01> (index 1) up to phase
        assert!((u[(1, 2)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagator_one_exciton_block() {
        let theta = 0.7;
        let u = dimer_propagator_circuit(theta).unitary();
        let block = project_one_exciton(&u, 2);
        let (s, c) = theta.sin_cos();
        let expect = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(c, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, -s),
                Complex64::new(c, 0.0),
            ],
        );
        assert!(phase_distance(&block, &expect) < 1e-12);
    }
}
