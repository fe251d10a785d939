use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("step `{name}` = {value} outside admissible interval (0, {max}]")]
    StepOutOfRange {
        name: &'static str,
        value: f64,
        max: f64,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("outer contraction mode does not match the outer objective ({0})")]
    ModeMismatch(&'static str),

    #[error("non-finite value produced at iteration {iteration} ({what})")]
    NonFinite { iteration: usize, what: &'static str },

    #[error("instance too large for exact enumeration: n = {n} > {max}")]
    TooLarge { n: usize, max: usize },

    #[error("empty feasible set: {0}")]
    EmptySet(&'static str),

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
