use thiserror::Error;

/// Errors raised by the STAR engine.
#[derive(Debug, Error)]
pub enum StarError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("design error: {0}")]
    Design(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("sampler state error: {0}")]
    State(String),
    #[error("transformation degeneracy: {0}")]
    Degeneracy(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StarError>;
