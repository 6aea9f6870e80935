use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid prompt combination {code}: {reason}")]
    InvalidCombination { code: String, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training split has no sentence labelled {0}")]
    MissingClass(crate::label::SentimentLabel),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("items do not align: {0}")]
    Alignment(String),
    #[error("backend failed while scoring reply {reply:?} after {attempts} attempt(s): {source}")]
    Scoring {
        reply: String,
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the error class: 2 configuration, 3 data, 4 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidCombination { .. } => 2,
            Error::Scoring { .. } | Error::Backend(_) => 4,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 3,
        }
    }
}

/// Failure reported by a scoring backend.
#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    pub attempts: u32,
}

impl BackendError {
    pub fn new(message: impl Into<String>) -> Self {
        BackendError {
            message: message.into(),
            attempts: 1,
        }
    }

    pub fn with_attempts(mut self, attempts: u32) -> Self {
        self.attempts = attempts;
        self
    }
}
