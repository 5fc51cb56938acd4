use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numeric failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numeric { message: String, iteration: Option<usize> },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error in {path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            message: message.into(),
            iteration: None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::Numeric { .. } => "numeric",
            Error::Validation { .. } => "validation",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Config { .. } => "config",
        }
    }
}
