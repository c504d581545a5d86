use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum MppError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected 1)")]
    FormatVersion(u32),
    #[error("model failed validation ({} violations): {}", .0.len(), first_violation(.0))]
    InvalidModel(Vec<Violation>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("episode index mismatch: learner expects {expected}, record has {got}")]
    EpisodeMismatch { expected: usize, got: usize },
    #[error("generator failure: {0}")]
    Generator(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
}

fn first_violation(v: &[Violation]) -> String {
    v.first().map(|x| x.to_string()).unwrap_or_default()
}

pub type Result<T, E = MppError> = std::result::Result<T, E>;
