use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::state::{DensityMatrix, POSITIVITY_TOL};
use crate::error::{Error, Result};

/// Measurement outcomes indexed by computational basis index. Bitstring
/// labels follow the little-endian convention: the rightmost character is
/// qubit 0, so label `"01"` is index 1 (qubit 0 excited).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub shots: u64,
    pub counts: Vec<u64>,
}

impl Counts {
    pub fn new(counts: Vec<u64>) -> Self {
        let shots = counts.iter().sum();
        Self { shots, counts }
    }

    /// Two-qubit counts from `N₀₀, N₀₁, N₁₀, N₁₁`.
    pub fn from_two_qubit(n00: u64, n01: u64, n10: u64, n11: u64) -> Self {
        Self::new(vec![n00, n01, n10, n11])
    }

    pub fn get(&self, label: &str) -> u64 {
        usize::from_str_radix(label, 2)
            .ok()
            .and_then(|i| self.counts.get(i).copied())
            .unwrap_or(0)
    }

    pub fn n00(&self) -> u64 {
        self.get("00")
    }

    pub fn n01(&self) -> u64 {
        self.get("01")
    }

    pub fn n10(&self) -> u64 {
        self.get("10")
    }

    pub fn n11(&self) -> u64 {
        self.get("11")
    }
}

/// Outcome distribution after independent readout bit flips on every qubit.
pub fn apply_readout_error(probs: &[f64], flip_p: f64) -> Vec<f64> {
    if flip_p == 0.0 {
        return probs.to_vec();
    }
    let n_qubits = probs.len().trailing_zeros();
    let mut out = probs.to_vec();
    for q in 0..n_qubits {
        let bit = 1usize << q;
        let mut next = out.clone();
        for (i, p) in next.iter_mut().enumerate() {
            *p = (1.0 - flip_p) * out[i] + flip_p * out[i ^ bit];
        }
        out = next;
    }
    out
}

/// Normalised measurement distribution of `rho`; small negative diagonals
/// from round-off are clipped, larger ones are an error.
pub(crate) fn measurement_distribution(rho: &DensityMatrix) -> Result<Vec<f64>> {
    let mut p = rho.probabilities();
    if let Some(bad) = p.iter().find(|&&x| x < -POSITIVITY_TOL) {
        return Err(Error::State(format!(
            "negative probability {bad:.3e} on the diagonal"
        )));
    }
    for x in p.iter_mut() {
        *x = x.max(0.0);
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::State("diagonal sums to zero".into()));
    }
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// Multinomial draw of `shots` computational-basis measurements, sampled as a
/// chain of conditional binomials from a ChaCha stream seeded with `seed`.
pub fn sample_counts(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<Counts> {
    let p = measurement_distribution(rho)?;
    sample_distribution(&p, shots, seed)
}

pub(crate) fn sample_distribution(p: &[f64], shots: u64, seed: u64) -> Result<Counts> {
    if shots == 0 {
        return Err(Error::Parameter("shots must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = shots;
    let mut mass = 1.0;
    let mut counts = vec![0u64; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == p.len() || mass <= pi {
            counts[i] = remaining;
            break;
        }
        let q = (pi / mass).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, q)
            .map_err(|e| Error::Numeric(format!("binomial({remaining}, {q}): {e}")))?
            .sample(&mut rng);
        counts[i] = k;
        remaining -= k;
        mass -= pi;
    }
    Ok(Counts::new(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::CMatrix;
    use num_complex::Complex64;

    fn diag(p: &[f64]) -> DensityMatrix {
        let mut m = CMatrix::zeros(p.len(), p.len());
        for (i, x) in p.iter().enumerate() {
            m[(i, i)] = Complex64::new(*x, 0.0);
        }
        DensityMatrix::from_raw(p.len().trailing_zeros() as usize, m)
    }

    #[test]
    fn pure_state_counts() {
        let rho = DensityMatrix::basis(2, 2).unwrap();
        let c = sample_counts(&rho, 8192, 7).unwrap();
        assert_eq!(c.n10(), 8192);
        assert_eq!(c.n00() + c.n01() + c.n11(), 0);
    }

    #[test]
    fn maximally_mixed_frequencies() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let c = sample_counts(&rho, 1_000_000, 11).unwrap();
        assert_eq!(c.shots, 1_000_000);
        for n in &c.counts {
            assert!((*n as f64 / 1e6 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let rho = diag(&[0.0, 0.3455, 0.6545, 0.0]);
        let a = sample_counts(&rho, 8192, 42).unwrap();
        let b = sample_counts(&rho, 8192, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shots, 8192);
        assert_eq!(a.n00() + a.n11(), 0);
        let c = sample_counts(&rho, 8192, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn negative_diagonal_handling() {
        let tiny = diag(&[-1e-12, 0.5, 0.5 + 1e-12, 0.0]);
        assert_eq!(sample_counts(&tiny, 100, 1).unwrap().n00(), 0);
        let bad = diag(&[-1e-6, 0.5, 0.5 + 1e-6, 0.0]);
        assert!(matches!(sample_counts(&bad, 100, 1), Err(Error::State(_))));
    }

    #[test]
    fn zero_shots_rejected() {
        let rho = DensityMatrix::basis(1, 0).unwrap();
        assert!(sample_counts(&rho, 0, 1).is_err());
    }

    #[test]
    fn label_convention() {
        let c = Counts::from_two_qubit(1, 2, 3, 4);
        assert_eq!(c.get("01"), 2);
        assert_eq!(c.get("10"), 3);
        assert_eq!(c.shots, 10);
    }

    #[test]
    fn readout_flip_mixes_neighbours() {
        let p = apply_readout_error(&[0.0, 1.0], 0.1);
        assert!((p[0] - 0.1).abs() < 1e-15 && (p[1] - 0.9).abs() < 1e-15);
        let p = apply_readout_error(&[0.0, 1.0, 0.0, 0.0], 0.0);
        assert_eq!(p, vec![0.0, 1.0, 0.0, 0.0]);
    }
}
