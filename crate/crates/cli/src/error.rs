use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input from the user; `field` names the offending option or key.
    #[error("invalid value for '{field}': {message}")]
    Usage { field: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] bnmf_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(field: impl Into<String>, message: impl ToString) -> Self {
        Self::Usage { field: field.into(), message: message.to_string() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// 2 for usage and parse errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage { .. } | Self::Parse { .. } => 2,
            _ => 1,
        }
    }
}
