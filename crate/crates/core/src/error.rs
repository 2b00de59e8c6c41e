use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions of two operands disagree.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// A value became NaN or infinite.
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    /// A caller-supplied argument is outside its domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A row of an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Not enough candidate items to draw the requested negatives.
    #[error("user {user}: need {needed} negative items but only {available} candidates exist")]
    InsufficientCandidates {
        user: usize,
        needed: usize,
        available: usize,
    },

    /// Local training produced a non-finite loss.
    #[error("training diverged for user {user} (last finite loss {last_finite_loss})")]
    Divergence { user: usize, last_finite_loss: f64 },

    /// A serialized container is malformed.
    #[error("malformed {kind}: {message}")]
    Format { kind: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(kind: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            kind,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
