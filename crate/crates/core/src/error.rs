use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("patch error: {0}")]
    Patch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("capacity error: requested {requested} but only {available} distinct items exist")]
    Capacity { requested: usize, available: usize },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("projection error: {0}")]
    Projection(String),
    #[error("report error: {0}")]
    Report(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}
