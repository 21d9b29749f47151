//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector in similarity")]
    ZeroNorm,

    #[error("codebook is empty")]
    EmptyCodebook,

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("labels `{0}` and `{1}` drew identical hypervectors; choose another seed or a larger dimension")]
    CodebookCollision(String, String),

    #[error("unknown label `{label}`{}", position.map(|p| format!(" at position {p}")).unwrap_or_default())]
    UnknownLabel { label: String, position: Option<usize> },

    #[error("wrong arity: expected {expected} states, got {actual}")]
    WrongArity { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no training window: every session is shorter than n = {0}")]
    EmptyTraining(usize),

    #[error("adaptation is disabled for this model")]
    AdaptationDisabled,

    #[error("model file format error in {field}: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("split needs at least 2 users, found {0}")]
    InsufficientUsers(usize),

    #[error("user `{0}` has fewer than 2 sessions")]
    InsufficientSessions(String),

    #[error("stationary distribution did not converge within {0} iterations")]
    Convergence(usize),

    #[error("unknown split strategy `{0}`")]
    UnknownStrategy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidDimension(_)
            | DimensionMismatch { .. }
            | DuplicateLabel(_)
            | CodebookCollision(..)
            | UnknownLabel { .. }
            | WrongArity { .. }
            | InvalidConfig(_)
            | AdaptationDisabled
            | InsufficientUsers(_)
            | InsufficientSessions(_)
            | UnknownStrategy(_) => ErrorKind::Validation,
            Format { .. } | Parse { .. } | EmptyDataset | EmptyTraining(_) | Json(_) | Csv(_) => ErrorKind::Data,
            ZeroNorm | EmptyCodebook | Convergence(_) | Io(_) => ErrorKind::Internal,
        }
    }
}
