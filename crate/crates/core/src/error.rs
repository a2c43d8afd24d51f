use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cut set is empty")]
    EmptyCutSet,

    #[error("height mismatch: disparity column has {disparity} rows, semantic column has {semantic}")]
    HeightMismatch { disparity: usize, semantic: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("no valid ground-truth pixels")]
    NoValidPixels,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("class count mismatch: file has {found} classes, config expects {expected}")]
    ClassCountMismatch { expected: usize, found: usize },

    #[error("{path}: cut mask is not binary (pixel value {value})")]
    NotBinary { path: PathBuf, value: u16 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
