use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}, {field}: {reason}")]
    Parse {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("record {id}: expected {expected} features, found {actual}")]
    DimensionMismatch { id: u64, expected: usize, actual: usize },
    #[error("dimension mismatch: model expects {expected} features, dataset has {actual}")]
    DatasetDimension { expected: usize, actual: usize },
    #[error("record {id}: label {label} outside 0..{classes}")]
    LabelOutOfRange { id: u64, label: usize, classes: usize },
    #[error("line {line}, record {id}: non-finite feature")]
    NonFinite { line: usize, id: u64 },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated or corrupt")]
    CorruptChecksum,
    #[error("config {key}: {reason}")]
    Config { key: String, reason: String },
    #[error(transparent)]
    Core(#[from] pfit_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Parse {
            line,
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Core(pfit_core::Error::ConfigInvalid { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
