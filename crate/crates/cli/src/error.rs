use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] scbm::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 0 success, 1 user or configuration error, 2 backend or I/O error.
    pub fn exit_code(&self) -> i32 {
        use scbm::Error as E;
        match self {
            CliError::Io { .. } => 2,
            CliError::Core(E::BackendUnavailable { .. } | E::Protocol(_) | E::Io { .. } | E::CorruptCache { .. }) => 2,
            _ => 1,
        }
    }
}
