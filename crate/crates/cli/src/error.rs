use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(#[from] witsen_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl CliError {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        CliError::Config {
            field,
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// 0 success, 1 configuration, 2 numerical divergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Numerical(witsen_core::Error::InvalidParameter { .. }) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
        }
    }
}
