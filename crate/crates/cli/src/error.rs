use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] bilevel_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl CliError {
    pub fn config(reason: impl Into<String>) -> Self {
        CliError::Config(reason.into())
    }

    /// 0 success, 1 configuration, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        use bilevel_core::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                E::NonFinite { .. } | E::EmptySet(_) => 2,
                E::Io { .. } => 3,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Format { .. } => 3,
        }
    }
}
