use std::path::PathBuf;

use mmnas_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown planted rule `{0}`")]
    UnknownRule(String),
    #[error("invalid record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite {group} at step {step}: {detail}")]
    NonFinite {
        step: usize,
        group: String,
        detail: String,
    },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("refusing to overwrite existing run at {0} (use --force)")]
    AlreadyExists(PathBuf),
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CoreError {
    let path = path.into();
    move |source| CoreError::Io { path, source }
}
