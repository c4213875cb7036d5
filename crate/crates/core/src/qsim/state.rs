use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;

use super::gate::{c, CMatrix};
use crate::error::{Error, Result};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 10;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Dense density matrix over the `2ⁿ` computational basis (little-endian:
/// basis index `Σ q_i·2^i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: CMatrix,
}

impl DensityMatrix {
    /// Pure computational basis state `|index⟩⟨index|`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::Shape(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut data = CMatrix::zeros(dim, dim);
        data[(index, index)] = c(1.0, 0.0);
        Ok(Self { n_qubits, data })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        let data = CMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0);
        Ok(Self { n_qubits, data })
    }

    /// Density matrix of a pure state vector (normalised on the way in).
    pub fn from_state_vector(amplitudes: &[Complex64]) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Shape(format!(
                "state vector length {dim} is not a power of two"
            )));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        check_size(n_qubits)?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::State("zero state vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(dim, amplitudes.iter().map(|a| a / norm));
        let data = &v * v.adjoint();
        Ok(Self { n_qubits, data })
    }

    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn from_matrix(data: CMatrix) -> Result<Self> {
        let dim = data.nrows();
        if data.ncols() != dim || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Shape(format!(
                "{}x{} is not a register-sized square matrix",
                dim,
                data.ncols()
            )));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        check_size(n_qubits)?;
        let rho = Self { n_qubits, data };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(n_qubits: usize, data: CMatrix) -> Self {
        Self { n_qubits, data }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// Diagonal of ρ, i.e. computational-basis probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = &self.data - self.data.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        // symmetrise so round-off cannot leak into the eigen-solver
        let h = (&self.data + self.data.adjoint()) * c(0.5, 0.0);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Expectation value `tr(ρ·O)`.
    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        (&self.data * op).trace()
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::State(format!(
                "not Hermitian (max |ρ−ρ†| = {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - c(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::State(format!("trace is {tr}, expected 1")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::State(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut CMatrix {
        &mut self.data
    }
}

fn check_size(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Shape(format!(
            "register of {n_qubits} qubits outside the supported range 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}
