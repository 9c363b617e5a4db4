use thiserror::Error;

use crate::diagram::ArityError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model at {path}: {message}")]
    Model { path: String, message: String },

    #[error("state {state:?}, action {action:?}: probabilities sum to {sum}, expected 1")]
    Distribution { state: String, action: String, sum: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid target specification: {0}")]
    Target(String),

    #[error("arity mismatch: {}", format_arity(.0))]
    Arity(Vec<ArityError>),

    #[error("invalid query: {0}")]
    Query(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("soundness fault: {0}")]
    SoundnessFault(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_arity(errors: &[ArityError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
