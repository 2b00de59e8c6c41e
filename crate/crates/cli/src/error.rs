use std::fmt::Display;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration, reported against a field.
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },
    /// A stage needs outputs that are not on disk.
    #[error("missing stage outputs: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: fedlab::Error,
    },
    #[error(transparent)]
    Lab(#[from] fedlab::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("replay mismatch: {}", .0.join(", "))]
    Replay(Vec<String>),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Display) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for anything that
    /// went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lab(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
