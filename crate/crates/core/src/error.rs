use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Bio { line: usize, message: String },

    #[error("unknown label `{label}`{}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    UnknownLabel { label: String, line: Option<usize> },

    #[error("invalid example `{id}`: {reason}")]
    InvalidExample { id: String, reason: String },

    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),

    #[error("duplicate example id `{0}`")]
    DuplicateId(String),

    #[error("empty dataset or index")]
    Empty,

    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),

    #[error("k = {k} exceeds dataset size {n}")]
    KExceedsDataset { k: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("no precomputed embedding for text digest {digest}")]
    MissingEmbedding { digest: String },

    #[error("provider error: {message}")]
    Provider { message: String, retriable: bool },

    #[error("replay-only mode: no cached response for key {key}")]
    ReplayMiss { key: String },

    #[error("model call failed for prompt {prompt_hash}: {source}")]
    ModelFailure {
        prompt_hash: String,
        #[source]
        source: Box<Error>,
    },

    #[error("training example `{0}` leaked from the evaluated split")]
    Leakage(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),

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

    pub(crate) fn provider(message: impl Into<String>, retriable: bool) -> Self {
        Error::Provider {
            message: message.into(),
            retriable,
        }
    }

    /// Whether retrying the same call may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Provider { retriable: true, .. })
    }
}
