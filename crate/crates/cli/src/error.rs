use std::path::PathBuf;

use bplight_core::{DatasetError, Error as CoreError};
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Process exit codes. Argument errors reported by the parser also exit
/// with [`exit::INVALID`].
pub mod exit {
    pub const RUNTIME: u8 = 1;
    pub const INVALID: u8 = 2;
    pub const DATASET_MISSING: u8 = 3;
    pub const CHECKPOINT: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("dataset not found under {dir}: looked for {wanted}")]
    DatasetMissing { dir: PathBuf, wanted: String },

    #[error("invalid experiment: {0}")]
    Invalid(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn checkpoint(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::Checkpoint {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::DatasetMissing { .. } => exit::DATASET_MISSING,
            CliError::Invalid(_) => exit::INVALID,
            CliError::Core(CoreError::Config(_) | CoreError::Parse { .. } | CoreError::Shape { .. }) => exit::INVALID,
            CliError::Checkpoint { .. } => exit::CHECKPOINT,
            _ => exit::RUNTIME,
        }
    }
}
