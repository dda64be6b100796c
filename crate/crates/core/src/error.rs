use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteCell { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: model expects {expected} feature(s), input has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("value {value} cannot be represented at {places} decimal place(s)")]
    Overflow { value: f64, places: u32 },

    #[error("unknown distance metric `{0}` (expected euclidean, manhattan or chebyshev)")]
    UnknownMetric(String),

    #[error("non-binary indicator `{token}` at position {position}")]
    NonBinary { position: usize, token: String },

    #[error("line {line}: `{token}` is not a 0/1 indicator")]
    IndicatorLine { line: usize, token: String },

    #[error("model document: {0}")]
    Document(String),

    #[error("unsupported model document version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("model document checksum mismatch")]
    Checksum,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
