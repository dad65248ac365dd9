use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reranking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A JSONL corpus record could not be parsed or violates the data model.
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate question_id {0:?}")]
    DuplicateQuestion(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("expected a {expected} split, got {found}")]
    WrongSplit {
        expected: &'static str,
        found: &'static str,
    },

    #[error("candidate window {0:?} has no padded context; call pad_context first")]
    UnpaddedWindow(String),

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("missing embedding for {0}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("regularization strength must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (loss = {loss})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

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

    /// True when the error stems from bad user input (files, flags, records)
    /// rather than a failure during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFinite(_) | Error::ShapeMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
