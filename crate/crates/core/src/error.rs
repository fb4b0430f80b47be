use std::io;

use thiserror::Error;

/// Which id space an out-of-range id belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    Query,
    User,
    Item,
}

impl std::fmt::Display for IdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            IdKind::Query => "query",
            IdKind::User => "user",
            IdKind::Item => "item",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("{kind} id {id} out of range (count {count})")]
    IdOutOfRange { kind: IdKind, id: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model has no {0}")]
    MissingComponent(&'static str),

    #[error("invalid feature vector: {0}")]
    InvalidFeatures(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not a model file (bad magic bytes)")]
    NotAModelFile,

    #[error("not a dataset file (bad magic bytes)")]
    NotADatasetFile,

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file")]
    Truncated,

    #[error("inconsistent file contents: {0}")]
    Inconsistent(String),

    #[error("malformed feature header: {0}")]
    MalformedHeader(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
