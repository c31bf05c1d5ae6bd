//! Crate-wide error type.
//!
//! Numeric routines validate their inputs eagerly and return
//! [`Error::InvalidArgument`] rather than propagating NaNs; protocol misuse
//! (over-running a release schedule, non-convergence) gets its own variant so
//! callers can distinguish configuration bugs from numeric trouble.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter was outside its domain (non-finite, non-positive, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A vector or matrix had the wrong dimension for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// More stream ingests than the release schedule was sized for.
    #[error(
        "release schedule exhausted: horizon {horizon} admits {max_ingests} ingests"
    )]
    ProtocolExhausted { horizon: u64, max_ingests: u64 },

    /// The estimator failed to reach its gradient tolerance within the
    /// iteration cap. Carries the last iterate so callers can inspect or
    /// salvage it.
    #[error(
        "solver did not converge: {iterations} iterations, gradient norm {grad_norm:.3e}"
    )]
    SolverFailure {
        iterations: u64,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    /// An I/O failure annotated with the path being written or read.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A failure inside one Monte-Carlo trial, annotated with its index so
    /// multi-trial runs point at the offending seed.
    #[error("trial {trial}: {source}")]
    Trial {
        trial: u32,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
