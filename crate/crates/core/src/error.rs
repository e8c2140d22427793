//! Error type shared by the library modules.

use thiserror::Error;

/// Errors raised by the solver library and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation
    /// (non-realizable moments, `h ≥ 1` in the Langevin inversion, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration (mesh edges, CFL weights, config keys, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical procedure failed (non-convergence where it is fatal).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
