use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot ingest {location}: {reason}")]
    Ingest { location: String, reason: String },

    #[error("{source_name}:{line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },

    #[error("unsupported format version {found} (this build reads version {expected})")]
    Version { found: u64, expected: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid commit: {0}")]
    InvalidCommit(String),

    #[error("training failed: {0}")]
    Train(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("model section `{section}` is invalid: {reason}")]
    Model { section: String, reason: String },

    #[error("length mismatch: {left} predictions vs {right} labels")]
    Length { left: usize, right: usize },

    #[error("cannot build folds: {0}")]
    Folds(String),

    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no operating point reaches joint precision >= {0}")]
    NoOperatingPoint(f64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
