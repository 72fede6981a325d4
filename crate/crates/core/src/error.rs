use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed manifest {path}: {message}")]
    MalformedManifest { path: PathBuf, message: String },

    #[error("sample {id:?} has label {label} but the stream declares {class_count} classes")]
    LabelOutOfRange {
        id: String,
        label: usize,
        class_count: usize,
    },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("partition {got} arrived out of order (expected {expected})")]
    OutOfOrder { expected: usize, got: usize },

    #[error("exemplar budget violated: {0}")]
    BudgetViolation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by user input rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRecord { .. }
                | Error::MalformedManifest { .. }
                | Error::LabelOutOfRange { .. }
                | Error::DuplicateId(_)
                | Error::InvalidInput(_)
                | Error::Config(_)
        )
    }
}
