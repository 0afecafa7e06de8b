use thiserror::Error;

/// Errors produced anywhere in the simulation and validation stack.
#[derive(Debug, Error)]
pub enum GbsError {
    #[error("invalid squeezing spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("non-physical state: {0}")]
    InvalidState(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("sampling degeneracy: {0}")]
    SamplingDegeneracy(String),
    #[error("invalid cluster model: {0}")]
    InvalidModel(String),
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for GbsError {
    fn from(e: serde_json::Error) -> Self {
        GbsError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GbsError>;
