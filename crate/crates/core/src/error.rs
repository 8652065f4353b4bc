use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {d} exceeds the prime table ({max} primes)")]
    DimensionTooLarge { d: usize, max: usize },

    #[error("unsupported density: {0}")]
    UnsupportedDensity(String),

    #[error("unknown sequence '{name}'; valid names are: {valid}")]
    UnknownSequence { name: String, valid: String },

    #[error("Gram matrix of {n} rows exceeds the configured cap of {cap}")]
    TooManyRows { n: usize, cap: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e}); try a larger regularizer")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite { .. } | Error::NoConvergence(_))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
