use std::path::PathBuf;

/// Errors raised anywhere in the encoding and benchmark stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("column `{0}` has no observed values in the training data")]
    AllMissing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("inner Newton solver failed to converge after {iterations} iterations (intercept {intercept}, objective {objective})")]
    NonConvergence {
        iterations: usize,
        intercept: f64,
        modes: Vec<f64>,
        objective: f64,
    },

    #[error("degenerate fold: {0}")]
    DegenerateFold(String),
}

pub type Result<T> = std::result::Result<T, Error>;
