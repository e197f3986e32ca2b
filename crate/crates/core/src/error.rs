//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation was asked to enumerate more state than its documented
    /// capacity allows (e.g. full configuration enumeration above 6 users).
    #[error("capacity exceeded: {what} supports at most {limit}, got {requested}")]
    Capacity {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Simplex made no progress for longer than the stall window even under
    /// the anti-cycling rule, or hit the iteration cap.
    #[error("LP solver stalled after {iterations} iterations")]
    LpStalled { iterations: u64 },

    #[error("LP has no optimal solution: status {0}")]
    LpNotOptimal(&'static str),

    #[error("malformed trace: {0}")]
    Trace(String),

    #[error("not enough qualifying groups: found {found}, need {requested}")]
    InsufficientGroups { found: usize, requested: usize },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// A failure annotated with where in a larger run it happened (e.g.
    /// which group trial); the kind of the underlying error shows through.
    #[error("{context}: {source}")]
    WithContext {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::WithContext {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Stable machine-readable discriminator for CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Capacity { .. } => "capacity",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::LpStalled { .. } => "lp-stalled",
            Error::LpNotOptimal(_) => "lp-not-optimal",
            Error::Trace(_) => "trace",
            Error::InsufficientGroups { .. } => "insufficient-groups",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
            Error::WithContext { source, .. } => source.kind(),
        }
    }
}
