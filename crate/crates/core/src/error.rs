use thiserror::Error;

/// Errors produced by the entbound pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("invalid pure state: {0}")]
    InvalidState(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),

    #[error("invalid measurement configuration: {0}")]
    InvalidMeasurement(String),

    #[error("invalid Bell expression: {0}")]
    InvalidExpression(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("unphysical Bell value: {0}")]
    Unphysical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
