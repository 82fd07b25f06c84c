use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dimension disagreed with what the layer or network expected.
    #[error("shape mismatch in {dim}: expected {expected}, got {actual}")]
    Shape {
        dim: String,
        expected: usize,
        actual: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    /// A caller broke a documented precondition (missing cache, wrong
    /// ordering of calls).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl Error {
    pub(crate) fn shape(dim: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            dim: dim.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unexpected magic {found} in {path} (expected {expected})")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated payload in {path}: header promises {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} at index {index} is outside 0..{class_count}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        class_count: usize,
    },

    #[error("requested {requested} samples but the dataset holds {available}")]
    Oversubscribed { requested: usize, available: usize },
}
