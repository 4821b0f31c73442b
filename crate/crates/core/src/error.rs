use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("unknown lexicon generation task `{0}` (expected 1.1, 1.2 or 1.3)")]
    InvalidTask(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error at `{path}`{}: {message}", record.as_ref().map(|r| format!(" (record {r})")).unwrap_or_default())]
    Schema {
        path: String,
        record: Option<String>,
        message: String,
    },

    #[error("post `{id}` has {found} annotations, expected 6")]
    AnnotationCount { id: String, found: usize },

    #[error("{} record(s) failed validation: {}", .0.len(), .0.join("; "))]
    Validation(Vec<String>),

    #[error("{what}: {} missing id(s): {}", ids.len(), preview(ids))]
    Join { what: String, ids: Vec<String> },

    #[error("backend unavailable after {attempts} attempt(s): {message} ({scored}/{total} prompts scored and persisted)")]
    BackendUnavailable {
        attempts: u32,
        message: String,
        scored: usize,
        total: usize,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("cache file `{}` is corrupt: {message}", path.display())]
    CorruptCache { path: PathBuf, message: String },

    #[error("i/o error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 20;
    if ids.len() <= SHOWN {
        ids.join(", ")
    } else {
        format!("{}, ... (+{} more)", ids[..SHOWN].join(", "), ids.len() - SHOWN)
    }
}
