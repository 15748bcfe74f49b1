use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("at least 2 samples are required to estimate a covariance, got {0}")]
    InsufficientSamples(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter-error normalizer is zero")]
    InvalidNormalizer,
    #[error("every objective entry was excluded (constant ground-truth channels)")]
    DegenerateTruth,
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
