use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Model,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {failed} of {total} rows failed to parse (first: {first})")]
    TooManyBadRows {
        path: PathBuf,
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("unlabeled post {0}: no label mean")]
    Unlabeled(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown label {label:?} (known: {known})")]
    UnknownLabel { label: String, known: String },

    #[error("class {0:?} has zero examples")]
    EmptyClass(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("singular system in surrogate fit")]
    Singular,

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("translation failed: {0}")]
    Translation(String),

    #[error("classifier backend failed: {0}")]
    Backend(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Divergence { .. }
            | Error::Singular
            | Error::Corrupt(_)
            | Error::Version { .. }
            | Error::Backend(_) => ErrorKind::Model,
            _ => ErrorKind::Data,
        }
    }
}
