//! Gate-level noise as a bath: two-site excitation transfer on a
//! density-matrix circuit simulator, checked against a hierarchical
//! equations of motion solver.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod exciton;
pub mod heom;
pub mod noisegen;
pub mod qsim;
pub mod trace;
pub mod units;

pub use error::{Error, Result};
