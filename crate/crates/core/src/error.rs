use std::path::PathBuf;
use thiserror::Error;

/// Error type shared by all modules in this crate.
///
/// Variants are grouped so callers (the CLI in particular) can map them
/// to coarse exit categories: configuration, data, or numerical failure.
#[derive(Debug, Error)]
pub enum KgeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl KgeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KgeError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, KgeError>;
