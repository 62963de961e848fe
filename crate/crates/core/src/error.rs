use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: malformed record: {message}")]
    MalformedLine {
        file: String,
        line: usize,
        message: String,
    },

    #[error("edge references unknown {kind} id `{id}`")]
    DanglingEndpoint { kind: &'static str, id: String },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateNode { kind: &'static str, id: String },

    #[error("cannot encode empty text")]
    EmptyText,

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Transient provider failure; the gateway retries these.
    #[error("transport failure: {0}")]
    Transport(String),

    #[error("prompt of ~{estimated} tokens exceeds the {limit}-token budget")]
    ContextOverflow { estimated: usize, limit: usize },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("no trainable groups")]
    NoTrainableGroups,

    #[error("training set has a single class")]
    SingleClass,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("missing artifact {path}: run {stage} first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether a retry might succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
