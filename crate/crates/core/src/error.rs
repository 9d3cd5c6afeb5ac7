use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QdrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QdrError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("bitmap width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    #[error("cannot split {available} keywords into {requested} clusters")]
    TooFewKeywords { available: usize, requested: usize },

    #[error("empty keyword universe")]
    EmptyUniverse,

    #[error("object {0:?} has no keyword in any leaf universe")]
    UnplacedObject(String),

    #[error("duplicate object id {0:?}")]
    DuplicateId(String),

    #[error("index corruption: {0}")]
    Corrupt(String),

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("ingest of {path} failed with {count} bad record(s); first: {first}")]
    Ingest { path: PathBuf, count: usize, first: String },

    #[error("embedding file line {line}: {message}")]
    Embedding { line: usize, message: String },

    #[error("not a QDR index file (bad magic)")]
    BadMagic,

    #[error("unsupported index format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch in section {section}")]
    Checksum { section: String },

    #[error("index file truncated: {0}")]
    Truncated(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QdrError {
    /// Tags an I/O error with the file it concerns.
    pub fn file(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> QdrError {
        let path = path.as_ref().to_path_buf();
        move |source| QdrError::File { path, source }
    }
}
