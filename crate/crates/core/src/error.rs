use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("non-finite value after iteration {iteration} in layer {layer}")]
    Divergence { iteration: usize, layer: usize },

    #[error("training diverged at epoch {epoch}")]
    TrainingDivergence { epoch: usize },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("symmetric positive-definite solve failed (condition estimate {condition:.3e})")]
    Solve { condition: f64 },

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("duplicate name `{0}`")]
    Duplicate(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
