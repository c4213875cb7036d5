use super::gate::{c, identity, pauli_x, pauli_y, pauli_z, CMatrix};
use crate::error::{Error, Result};

pub const COMPLETENESS_TOL: f64 = 1e-12;

/// Completely positive trace-preserving map in Kraus form; every operator
/// has the channel's local dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Channel("no Kraus operators".into()))?;
        let dim = first.nrows();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Channel(format!(
                "operator dimension {dim} is not a qubit register size"
            )));
        }
        if ops.iter().any(|k| k.nrows() != dim || k.ncols() != dim) {
            return Err(Error::Channel(
                "Kraus operators have mismatched dimensions".into(),
            ));
        }
        let ch = Self { ops };
        let err = ch.completeness_error();
        if err > COMPLETENESS_TOL {
            return Err(Error::Channel(format!(
                "Σ K†K deviates from identity by {err:.3e}"
            )));
        }
        Ok(ch)
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn arity(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Largest entry of `Σ K†K − I`.
    pub fn completeness_error(&self) -> f64 {
        let dim = self.ops[0].nrows();
        let sum = self
            .ops
            .iter()
            .fold(CMatrix::zeros(dim, dim), |acc, k| acc + k.adjoint() * k);
        (sum - identity(dim))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `ρ ↦ (1−p)ρ + p·I/2`.
    pub fn depolarizing(p: f64) -> Result<Self> {
        check_probability(p, "depolarizing")?;
        let mut ops = vec![identity(2) * c((1.0 - 0.75 * p).sqrt(), 0.0)];
        if p > 0.0 {
            let s = c((p / 4.0).sqrt(), 0.0);
            ops.extend([pauli_x() * s, pauli_y() * s, pauli_z() * s]);
        }
        Self::new(ops)
    }

    /// `ρ ↦ (1−p)ρ + p·I/4` on two qubits.
    pub fn depolarizing2(p: f64) -> Result<Self> {
        check_probability(p, "two-qubit depolarizing")?;
        let paulis = [identity(2), pauli_x(), pauli_y(), pauli_z()];
        let mut ops = vec![identity(4) * c((1.0 - 15.0 * p / 16.0).sqrt(), 0.0)];
        if p > 0.0 {
            let s = c((p / 16.0).sqrt(), 0.0);
            for (i, hi) in paulis.iter().enumerate() {
                for (j, lo) in paulis.iter().enumerate() {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    ops.push(hi.kronecker(lo) * s);
                }
            }
        }
        Self::new(ops)
    }

    /// Energy relaxation `|1⟩ → |0⟩` with probability `gamma`.
    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        check_probability(gamma, "amplitude damping")?;
        let k0 = CMatrix::from_row_slice(
            2,
            2,
            &[
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c((1.0 - gamma).sqrt(), 0.0),
            ],
        );
        let k1 = CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(gamma.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        );
        Self::new(vec![k0, k1])
    }

    /// `ρ ↦ (1−p)ρ + p·ZρZ`.
    pub fn phase_flip(p: f64) -> Result<Self> {
        check_probability(p, "phase flip")?;
        Self::new(vec![
            identity(2) * c((1.0 - p).sqrt(), 0.0),
            pauli_z() * c(p.sqrt(), 0.0),
        ])
    }

    /// `ρ ↦ (1−p)ρ + p·XρX`.
    pub fn bit_flip(p: f64) -> Result<Self> {
        check_probability(p, "bit flip")?;
        Self::new(vec![
            identity(2) * c((1.0 - p).sqrt(), 0.0),
            pauli_x() * c(p.sqrt(), 0.0),
        ])
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "{what} probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_channels_are_complete() {
        for p in [0.0, 0.01, 0.3, 1.0] {
            for ch in [
                KrausChannel::depolarizing(p).unwrap(),
                KrausChannel::depolarizing2(p).unwrap(),
                KrausChannel::amplitude_damping(p).unwrap(),
                KrausChannel::phase_flip(p).unwrap(),
                KrausChannel::bit_flip(p).unwrap(),
            ] {
                assert!(ch.completeness_error() <= COMPLETENESS_TOL);
            }
        }
    }

    #[test]
    fn incomplete_set_is_rejected() {
        let k = identity(2) * c(0.9, 0.0);
        assert!(matches!(KrausChannel::new(vec![k]), Err(Error::Channel(_))));
    }

    #[test]
    fn probability_out_of_range() {
        assert!(matches!(
            KrausChannel::depolarizing(1.2),
            Err(Error::Parameter(_))
        ));
        assert!(KrausChannel::amplitude_damping(-0.1).is_err());
    }
}
