use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate code `{code}` (lines {first} and {second})")]
    DuplicateCode { code: String, first: usize, second: usize },

    #[error("duplicate id `{id}` (lines {first} and {second})")]
    DuplicateId { id: String, first: usize, second: usize },

    #[error("orphan node `{code}`: no explicit parent and no prefix ancestor")]
    OrphanNode { code: String },

    #[error("node `{code}` at level {level} is inconsistent with parent `{parent}` at level {parent_level}")]
    LevelInconsistent {
        code: String,
        level: u32,
        parent: String,
        parent_level: u32,
    },

    #[error("unknown code `{0}`")]
    UnknownCode(String),

    #[error("unknown label `{label}` on record `{id}`")]
    UnknownLabel { id: String, label: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("record {index}: expected {expected} components, got {actual}")]
    RecordDimension {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("zero-norm vector{}", .id.as_deref().map(|id| format!(" `{id}`")).unwrap_or_default())]
    ZeroNorm { id: Option<String> },

    #[error("non-finite component in vector{}", .id.as_deref().map(|id| format!(" `{id}`")).unwrap_or_default())]
    NonFinite { id: Option<String> },

    #[error("empty vector")]
    EmptyVector,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("bad file header: {0}")]
    BadHeader(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("node `{code}` has no embedding in namespace `{namespace}`")]
    MissingEmbedding { code: String, namespace: String },

    #[error("level {0} has no namespace mapping")]
    MissingLevel(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("negative value {value} for {what}")]
    Negative { what: String, value: f64 },

    #[error("duplicate intensity for code `{code}`{}", .region.as_deref().map(|r| format!(" region `{r}`")).unwrap_or_default())]
    DuplicateIntensity { code: String, region: Option<String> },

    #[error("query `{id}`: {source}")]
    Query {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoBare(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("embedding provider: {0}")]
    Provider(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error describes bad input data rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::IoBare(_)
            | Error::Provider(_)
            | Error::NonFiniteLoss { .. }
            | Error::Overflow(_) => false,
            Error::Query { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
