use std::path::{Path, PathBuf};

use gatebath::analysis::LambdaFitConfig;
use gatebath::engine::{CircuitConfig, DEFAULT_SHOTS, DEFAULT_STEPS};
use gatebath::exciton::ExcitonSystem;
use gatebath::heom::{BathSpec, HierarchySpec};
use gatebath::noisegen::{Layout, NoiseModel, SequenceKind, DEFAULT_DECOHERENCE_PERIOD};
use gatebath::units::EnergyScale;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "GATEBATH_OUT";
pub const DEFAULT_OUT: &str = "gatebath-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Circuit,
    Heom,
    Oracle,
}

impl std::str::FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "circuit" => Ok(Self::Circuit),
            "heom" => Ok(Self::Heom),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown engine {other:?} (circuit, heom, oracle)")),
        }
    }
}

/// One JSON document describing a run. Every field has a default, so `{}`
/// is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: EngineKind,
    /// Site Hamiltonian; the symmetric dimer at `scale.j0_cm` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<ExcitonSystem>,
    pub scale: EnergyScale,
    pub noise: NoiseModel,
    pub sequence: SequenceKind,
    pub layout: Layout,
    pub d: f64,
    /// Sweep of damping coefficients; overrides `d` where a list is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ds: Option<Vec<f64>>,
    pub delta_t_d: u32,
    pub bath: BathSpec,
    pub hierarchy: HierarchySpec,
    pub n_steps: usize,
    /// `null` gives exact populations instead of sampled counts.
    pub shots: Option<u64>,
    pub seed: u64,
    pub p0: usize,
    pub lambda_fit: LambdaFitConfig,
    pub lambda_target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    pub rms_threshold: f64,
    pub granularity: f64,
    pub convergence_tolerance: f64,
    pub skip_convergence: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: EngineKind::Circuit,
            system: None,
            scale: EnergyScale::default(),
            noise: NoiseModel::calibrated(),
            sequence: SequenceKind::Swap2,
            layout: Layout::Interleaved,
            d: 0.0,
            ds: None,
            delta_t_d: DEFAULT_DECOHERENCE_PERIOD,
            bath: BathSpec {
                lambda_cm: 120.0,
                gamma_ps: 100.0,
                temperature_k: 300.0,
            },
            hierarchy: HierarchySpec::default(),
            n_steps: DEFAULT_STEPS,
            shots: Some(DEFAULT_SHOTS),
            seed: 0,
            p0: 0,
            lambda_fit: LambdaFitConfig::default(),
            lambda_target: 120.0,
            calibration: None,
            rms_threshold: 0.05,
            granularity: 1.0,
            convergence_tolerance: 1e-3,
            skip_convergence: false,
            out: None,
        }
    }
}

/// Command-line values that take precedence over the JSON document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub d: Option<f64>,
    pub ds: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub sequence: Option<SequenceKind>,
    pub engine: Option<EngineKind>,
    pub shots: Option<u64>,
    pub exact: bool,
    pub n_steps: Option<usize>,
    pub calibration: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `--lambda` sets the bath λ for HEOM runs and the prediction target.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.d {
            self.d = v;
            self.ds = None;
        }
        if let Some(v) = &o.ds {
            self.ds = Some(v.clone());
        }
        if let Some(v) = o.lambda {
            self.bath.lambda_cm = v;
            self.lambda_target = v;
        }
        if let Some(v) = o.sequence {
            self.sequence = v;
        }
        if let Some(v) = o.engine {
            self.engine = v;
        }
        if let Some(v) = o.shots {
            self.shots = Some(v);
        }
        if o.exact {
            self.shots = None;
        }
        if let Some(v) = o.n_steps {
            self.n_steps = v;
        }
        if let Some(v) = &o.calibration {
            self.calibration = Some(v.clone());
        }
    }

    /// Output directory: the config or `--out`, then `$GATEBATH_OUT`, then
    /// `./gatebath-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn system(&self) -> ExcitonSystem {
        self.system
            .clone()
            .unwrap_or_else(|| ExcitonSystem::symmetric_dimer(self.scale.j0_cm))
    }

    pub fn damping_list(&self) -> Vec<f64> {
        self.ds.clone().unwrap_or_else(|| vec![self.d])
    }

    pub fn circuit(&self, d: f64) -> CircuitConfig {
        CircuitConfig {
            scale: self.scale,
            n_steps: self.n_steps,
            p0: self.p0,
            d,
            delta_t_d: self.delta_t_d,
            sequence: self.sequence,
            layout: self.layout,
            noise: self.noise,
            shots: self.shots,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.shots == Some(0) {
            return bad("shots must be at least 1".into());
        }
        if !(self.scale.dt_fs > 0.0) || !self.scale.dt_fs.is_finite() {
            return bad(format!(
                "scale.dt_fs must be positive, got {}",
                self.scale.dt_fs
            ));
        }
        for d in self.damping_list() {
            if !(d >= 0.0) || !d.is_finite() {
                return bad(format!("damping coefficient must be non-negative, got {d}"));
            }
        }
        if let Some(sys) = &self.system {
            sys.validate()
                .map_err(|e| CliError::Config(format!("system: {e}")))?;
            if self.p0 >= sys.n_sites() {
                return bad(format!(
                    "p0 = {} but the system has {} sites",
                    self.p0,
                    sys.n_sites()
                ));
            }
        }
        self.noise
            .validate()
            .map_err(|e| CliError::Config(format!("noise: {e}")))?;
        self.bath
            .validate()
            .map_err(|e| CliError::Config(format!("bath: {e}")))?;
        self.hierarchy
            .validate()
            .map_err(|e| CliError::Config(format!("hierarchy: {e}")))?;
        Ok(())
    }
}
