use thiserror::Error;

use crate::qsim::Counts;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exciton system: {0}")]
    InvalidSystem(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid Kraus channel: {0}")]
    Channel(String),

    #[error("invalid quantum state: {0}")]
    State(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("all shots leaked out of the one-exciton manifold ({counts:?})")]
    Leakage { counts: Counts },

    #[error("HEOM integration unstable at t = {time_fs} fs (trace deviation {deviation:.3e}); try a smaller step than {step_fs} fs")]
    Unstable {
        time_fs: f64,
        deviation: f64,
        step_fs: f64,
    },

    #[error("hierarchy too large: {count} auxiliary density operators (limit {limit})")]
    MemoryGuard { count: u128, limit: u128 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("calibration needs at least two distinct damping coefficients")]
    Rank,

    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed trace file: {0}")]
    Format(String),
}
