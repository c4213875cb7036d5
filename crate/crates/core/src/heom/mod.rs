//! Hierarchical equations of motion for Drude-Lorentz baths.
//!
//! Each site `j` couples to its own bath through `Q_j = |j⟩⟨j|`. The bath
//! correlation function is expanded as `Σ_k c_k e^{-ν_k t}` and every term
//! becomes a mode of the hierarchy; mode `m` belongs to site `m / (K+1)`.
//! Internally time is in fs and energies in rad/fs (ħ = 1).

mod bath;
mod hierarchy;

pub use bath::{
    correlation_expansion, drude_lorentz, reorganization_integral, truncation_correction, BathSpec,
    ExpansionTerm,
};
pub use hierarchy::{ado_count, build_hierarchy, Hierarchy, MAX_ADOS};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exciton::{build_one_exciton_hamiltonian, ExcitonSystem};
use crate::trace::{Engine, PopulationTrace, Provenance};
use crate::units::wavenumber_to_angular;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Above this many ADOs the derivative is evaluated in parallel.
const PARALLEL_ADOS: usize = 4096;

/// RK4 is stable on the negative real axis up to about 2.78; stay below.
const STABILITY_LIMIT: f64 = 2.5;

const TRACE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    pub truncation: usize,
    pub matsubara: usize,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        Self {
            truncation: 8,
            matsubara: 2,
        }
    }
}

impl HierarchySpec {
    pub fn new(truncation: usize, matsubara: usize) -> Result<Self> {
        let s = Self {
            truncation,
            matsubara,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::Parameter(
                "hierarchy truncation must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn n_modes(&self, n_sites: usize) -> usize {
        n_sites * (self.matsubara + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeomOptions {
    /// Largest Runge-Kutta step in fs. Output steps are split into equal
    /// substeps no longer than this, and shorter still if needed for
    /// stability.
    pub rk_step_fs: f64,
}

impl Default for HeomOptions {
    fn default() -> Self {
        Self { rk_step_fs: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    site: usize,
    c: Complex64,
    nu: f64,
}

/// One coupling from an ADO to a neighbour: `out += left·Q_j·ρ_nb +
/// right·ρ_nb·Q_j`.
#[derive(Debug, Clone, Copy)]
struct Link {
    neighbour: u32,
    site: u32,
    left: Complex64,
    right: Complex64,
}

/// The hierarchy generator for one system and set of baths.
#[derive(Debug, Clone)]
pub struct HeomSolver {
    dim: usize,
    h: Vec<Complex64>,
    h_spread: f64,
    delta: Vec<f64>,
    hierarchy: Hierarchy,
    damping: Vec<f64>,
    link_offsets: Vec<usize>,
    links: Vec<Link>,
}

/// All ADOs, stored as consecutive row-major `dim × dim` blocks. Block 0
/// is the reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HeomState {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl HeomState {
    pub fn n_ados(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn ado(&self, a: usize) -> &[Complex64] {
        let d2 = self.dim * self.dim;
        &self.data[a * d2..(a + 1) * d2]
    }

    pub fn reduced(&self) -> &[Complex64] {
        self.ado(0)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim + i].re)
            .collect()
    }

    /// Distance from a valid set of populations: trace error, negative
    /// populations or populations above one. NaN if the state diverged.
    pub fn deviation(&self) -> f64 {
        let mut dev = (self.trace() - 1.0).norm();
        for p in self.populations() {
            if !p.is_finite() {
                return f64::NAN;
            }
            dev = dev.max(-p).max(p - 1.0);
        }
        dev
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.data[i * d + j] - self.data[j * d + i].conj()).norm());
            }
        }
        worst
    }
}

impl HeomSolver {
    pub fn new(sys: &ExcitonSystem, baths: &[BathSpec], spec: HierarchySpec) -> Result<Self> {
        sys.validate()?;
        spec.validate()?;
        let dim = sys.n_sites();
        if baths.len() != dim {
            return Err(Error::Parameter(format!(
                "{} baths given for {dim} sites",
                baths.len()
            )));
        }
        let h_cm = build_one_exciton_hamiltonian(sys)?;
        let h: Vec<Complex64> = (0..dim * dim)
            .map(|k| Complex64::new(wavenumber_to_angular(h_cm[(k / dim, k % dim)]), 0.0))
            .collect();
        let eig = h_cm.clone().symmetric_eigenvalues();
        let h_spread = wavenumber_to_angular(eig.max() - eig.min());

        let mut modes = Vec::new();
        let mut delta = Vec::with_capacity(dim);
        for (site, bath) in baths.iter().enumerate() {
            for t in correlation_expansion(bath, spec.matsubara)? {
                modes.push(Mode {
                    site,
                    c: t.c_fs2(),
                    nu: t.nu_fs(),
                });
            }
            delta.push(truncation_correction(bath, spec.matsubara)?);
        }
        let hierarchy = build_hierarchy(modes.len(), spec.truncation)?;
        let damping = (0..hierarchy.len())
            .map(|a| {
                hierarchy
                    .occupations(a)
                    .iter()
                    .zip(&modes)
                    .map(|(&n, m)| n as f64 * m.nu)
                    .sum()
            })
            .collect();
        let mut link_offsets = Vec::with_capacity(hierarchy.len() + 1);
        let mut links = Vec::new();
        link_offsets.push(0);
        for a in 0..hierarchy.len() {
            let n = hierarchy.occupations(a);
            for (m, mode) in modes.iter().enumerate() {
                let site = mode.site as u32;
                if let Some(p) = hierarchy.raised(a, m) {
                    links.push(Link {
                        neighbour: p as u32,
                        site,
                        left: -I,
                        right: I,
                    });
                }
                if let Some(q) = hierarchy.lowered(a, m) {
                    let w = n[m] as f64;
                    links.push(Link {
                        neighbour: q as u32,
                        site,
                        left: -I * w * mode.c,
                        right: I * w * mode.c.conj(),
                    });
                }
            }
            link_offsets.push(links.len());
        }
        Ok(Self {
            dim,
            h,
            h_spread,
            delta,
            hierarchy,
            damping,
            link_offsets,
            links,
        })
    }

    pub fn n_ados(&self) -> usize {
        self.hierarchy.len()
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn initial_state(&self, p0: usize) -> Result<HeomState> {
        if p0 >= self.dim {
            return Err(Error::Parameter(format!(
                "initial site {p0} outside {} sites",
                self.dim
            )));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); self.n_ados() * self.dim * self.dim];
        data[p0 * self.dim + p0] = Complex64::new(1.0, 0.0);
        Ok(HeomState {
            dim: self.dim,
            data,
        })
    }

    /// Rough spectral radius of the generator, used to pick a stable step.
    pub fn stiffness(&self) -> f64 {
        let dmax = self.damping.iter().cloned().fold(0.0, f64::max);
        let dephasing = 4.0 * self.delta.iter().cloned().fold(0.0, f64::max);
        dmax + self.h_spread + dephasing
    }

    /// Number of RK4 substeps used per output step of `dt_fs`.
    pub fn substeps(&self, dt_fs: f64, options: &HeomOptions) -> usize {
        let by_size = (dt_fs / options.rk_step_fs - 1e-9).ceil().max(1.0);
        let by_stability = (dt_fs * self.stiffness() / STABILITY_LIMIT).ceil().max(1.0);
        by_size.max(by_stability) as usize
    }

    fn ado_derivative(&self, a: usize, state: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let d2 = d * d;
        let rho = &state[a * d2..(a + 1) * d2];
        let gamma = self.damping[a];
        for i in 0..d {
            for k in 0..d {
                let mut comm = Complex64::new(0.0, 0.0);
                for l in 0..d {
                    comm += self.h[i * d + l] * rho[l * d + k] - rho[i * d + l] * self.h[l * d + k];
                }
                out[i * d + k] = -I * comm - gamma * rho[i * d + k];
            }
        }
        // -Δ[Q,[Q,ρ]] removes Δ·ρ_ik whenever exactly one of i, k equals j.
        for (j, &dj) in self.delta.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            for k in 0..d {
                if k != j {
                    out[j * d + k] -= dj * rho[j * d + k];
                    out[k * d + j] -= dj * rho[k * d + j];
                }
            }
        }
        for link in &self.links[self.link_offsets[a]..self.link_offsets[a + 1]] {
            let j = link.site as usize;
            let nb = link.neighbour as usize;
            let r = &state[nb * d2..(nb + 1) * d2];
            for k in 0..d {
                out[j * d + k] += link.left * r[j * d + k];
                out[k * d + j] += link.right * r[k * d + j];
            }
        }
    }

    pub fn derivative(&self, state: &[Complex64], out: &mut [Complex64]) {
        let d2 = self.dim * self.dim;
        if self.n_ados() > PARALLEL_ADOS {
            out.par_chunks_mut(d2)
                .with_min_len(256)
                .enumerate()
                .for_each(|(a, o)| self.ado_derivative(a, state, o));
        } else {
            for (a, o) in out.chunks_mut(d2).enumerate() {
                self.ado_derivative(a, state, o);
            }
        }
    }

    /// Advances `state` by `n` RK4 steps of length `h` fs.
    pub fn rk4(&self, state: &mut HeomState, h: f64, n: usize) {
        let len = state.data.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
            vec![zero; len],
            vec![zero; len],
            vec![zero; len],
            vec![zero; len],
            vec![zero; len],
        );
        let y = &mut state.data;
        for _ in 0..n {
            self.derivative(y, &mut k1);
            axpy(&mut tmp, y, 0.5 * h, &k1);
            self.derivative(&tmp, &mut k2);
            axpy(&mut tmp, y, 0.5 * h, &k2);
            self.derivative(&tmp, &mut k3);
            axpy(&mut tmp, y, h, &k3);
            self.derivative(&tmp, &mut k4);
            let w = h / 6.0;
            for i in 0..len {
                y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }

    /// Reduced-density-matrix populations at `0, dt, …, n_steps·dt`.
    pub fn propagate(
        &self,
        p0: usize,
        dt_fs: f64,
        n_steps: usize,
        options: &HeomOptions,
    ) -> Result<Vec<Vec<f64>>> {
        if !(dt_fs > 0.0 && dt_fs.is_finite()) {
            return Err(Error::Parameter(format!(
                "time step must be > 0, got {dt_fs}"
            )));
        }
        if !(options.rk_step_fs > 0.0 && options.rk_step_fs.is_finite()) {
            return Err(Error::Parameter(format!(
                "RK step must be > 0, got {}",
                options.rk_step_fs
            )));
        }
        let mut state = self.initial_state(p0)?;
        let sub = self.substeps(dt_fs, options);
        let h = dt_fs / sub as f64;
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(state.populations());
        for step in 1..=n_steps {
            self.rk4(&mut state, h, sub);
            let deviation = state.deviation();
            if !(deviation <= TRACE_TOLERANCE) {
                return Err(Error::Unstable {
                    time_fs: step as f64 * dt_fs,
                    deviation,
                    step_fs: h,
                });
            }
            out.push(state.populations());
        }
        Ok(out)
    }
}

fn axpy(out: &mut [Complex64], y: &[Complex64], a: f64, k: &[Complex64]) {
    for ((o, &yi), &ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + a * ki;
    }
}

/// Population trace on the grid `t = 0, dt, …, n_steps·dt`.
pub fn heom_propagate(
    sys: &ExcitonSystem,
    baths: &[BathSpec],
    spec: HierarchySpec,
    p0: usize,
    dt_fs: f64,
    n_steps: usize,
) -> Result<PopulationTrace> {
    heom_propagate_with(
        sys,
        baths,
        spec,
        p0,
        dt_fs,
        n_steps,
        &HeomOptions::default(),
    )
}

pub fn heom_propagate_with(
    sys: &ExcitonSystem,
    baths: &[BathSpec],
    spec: HierarchySpec,
    p0: usize,
    dt_fs: f64,
    n_steps: usize,
    options: &HeomOptions,
) -> Result<PopulationTrace> {
    let solver = HeomSolver::new(sys, baths, spec)?;
    let populations = solver.propagate(p0, dt_fs, n_steps, options)?;
    let omega = if sys.n_sites() > 1 {
        wavenumber_to_angular(sys.couplings[0][1].abs())
    } else {
        0.0
    };
    let times_fs: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt_fs).collect();
    let mut provenance = Provenance::new(Engine::Heom);
    provenance.lambda_cm = baths.first().map(|b| b.lambda_cm);
    provenance.bath = baths.first().copied();
    Ok(PopulationTrace {
        steps: (0..=n_steps).collect(),
        thetas: times_fs.iter().map(|t| omega * t).collect(),
        leak_frac: vec![0.0; n_steps + 1],
        counts: vec![None; n_steps + 1],
        populations,
        times_fs,
        provenance,
    })
}

/// Outcome of comparing `(L, K)` against `(L+2, K+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub base: HierarchySpec,
    pub refined: HierarchySpec,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub converged: bool,
}

pub fn convergence_check(
    sys: &ExcitonSystem,
    baths: &[BathSpec],
    spec: HierarchySpec,
    p0: usize,
    dt_fs: f64,
    n_steps: usize,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    let refined = HierarchySpec {
        truncation: spec.truncation + 2,
        matsubara: spec.matsubara + 1,
    };
    let a = heom_propagate(sys, baths, spec, p0, dt_fs, n_steps)?;
    let b = heom_propagate(sys, baths, refined, p0, dt_fs, n_steps)?;
    let max_deviation = a
        .populations
        .iter()
        .zip(&b.populations)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    let converged = max_deviation < tolerance;
    if !converged {
        log::warn!(
            "HEOM not converged at L={} K={}: deviation {max_deviation:.3e}",
            spec.truncation,
            spec.matsubara
        );
    }
    Ok(ConvergenceReport {
        base: spec,
        refined,
        max_deviation,
        tolerance,
        converged,
    })
}
