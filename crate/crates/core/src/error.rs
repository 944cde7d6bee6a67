use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sizes, unknown strategy names, inconsistent scenario settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A scenario key failed to parse or validate.
    #[error("scenario error at `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Scenario {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("{path}: line {line}: {message}")]
    Ingestion {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    /// Violation of a pipeline precondition (empty partition, mixed rounds, ...).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Caller broke an operation contract (empty input, out-of-range weight, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
