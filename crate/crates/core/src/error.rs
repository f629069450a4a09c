use std::path::PathBuf;

use crate::corpus::SentenceAddress;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),

    #[error("sentence {0} not found")]
    NotFound(SentenceAddress),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("claim {claim_id}: {message}")]
    Validation { claim_id: u64, message: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("dimension mismatch{}: expected {expected}, got {got}", .index.map(|i| format!(" at query {i}")).unwrap_or_default())]
    Dimension {
        index: Option<usize>,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index build failed: {0}")]
    Build(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
