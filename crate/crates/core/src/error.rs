use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants are grouped by the failure class the CLI
/// maps to exit codes: configuration/usage, data, and backend.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    DataFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("pool has {available} pairs but {requested} were requested")]
    PoolTooSmall { available: usize, requested: usize },

    #[error("duplicate segment id {id:?}")]
    DuplicateId { id: String },

    #[error("length mismatch: {context} (expected {expected}, got {actual})")]
    LengthMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("embedding failed for {id:?}: {message}")]
    Embedding { id: String, message: String },

    #[error("index fingerprint {index} does not match pool fingerprint {pool}")]
    FingerprintMismatch { index: String, pool: String },

    #[error("tokenizer mismatch: index built with {index}, queried with {query}")]
    TokenizerMismatch { index: String, query: String },

    #[error("unknown MQM category {category:?}")]
    UnknownCategory { category: String },

    #[error("no scores ingested for metric {metric:?}")]
    MissingMetric { metric: String },

    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { message: String, attempts: u32 },

    #[error("backend does not support {operation}")]
    Unsupported { operation: String },

    #[error("scoring aborted after {completed} of {total} candidates: {message}")]
    ScoringAborted {
        completed: usize,
        total: usize,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::DataFormat {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures caused by malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DataFormat { .. }
                | Error::EmptyInput(_)
                | Error::PoolTooSmall { .. }
                | Error::DuplicateId { .. }
                | Error::LengthMismatch { .. }
                | Error::FingerprintMismatch { .. }
                | Error::TokenizerMismatch { .. }
                | Error::UnknownCategory { .. }
                | Error::MissingMetric { .. }
                | Error::Json(_)
        )
    }

    /// True for failures originating in a generation/scoring backend.
    pub fn is_backend_error(&self) -> bool {
        matches!(
            self,
            Error::Backend { .. } | Error::Unsupported { .. } | Error::ScoringAborted { .. }
        )
    }
}
