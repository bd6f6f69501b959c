use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LsvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LsvError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A loaded value violates a type invariant; `field` names the offending item.
    #[error("validation failed for {field}: {message}")]
    Validation { field: String, message: String },

    /// Malformed binary container (bad magic, truncated payload, bad header).
    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    /// JSON schema violation. `pointer` is a JSON pointer to the failing node.
    #[error("{path}: schema error at '{pointer}': {message}")]
    Schema {
        path: PathBuf,
        pointer: String,
        message: String,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: image error: {message}")]
    Image { path: PathBuf, message: String },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}

impl LsvError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        LsvError::InvalidArgument(msg.into())
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        LsvError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        LsvError::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LsvError::Io {
            path: path.into(),
            source,
        }
    }
}
