use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("learner {learner}: {reason}")]
    InvalidData { learner: usize, reason: String },

    #[error("learner {learner}: needs at least {required} rows to split, has {actual}")]
    TooFewRows {
        learner: usize,
        required: usize,
        actual: usize,
    },

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch between learner {source_learner} ({source_dim} features) and learner {host_learner} ({host_dim} features)")]
    LearnerDimensionMismatch {
        source_learner: usize,
        source_dim: usize,
        host_learner: usize,
        host_dim: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fit failed for {method}: {reason}")]
    Fit { method: String, reason: String },

    #[error("learner {learner}: every candidate method failed to fit")]
    NoViableMethod { learner: usize },

    #[error("pair ({0}, {1}): {2}")]
    Pair(usize, usize, Box<Error>),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("K = {k} out of range 1..={n}")]
    InvalidK { k: usize, n: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
