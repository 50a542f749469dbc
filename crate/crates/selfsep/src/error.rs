use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("invalid {what}: {details}")]
    InvalidParameter { what: &'static str, details: String },
    #[error("aircraft velocity is zero; heading is undefined")]
    ZeroVelocity,
    #[error("{what} is empty")]
    EmptyInput { what: &'static str },
    #[error("{what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("feature dimension mismatch: predictor was fit on {expected} features, query has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no valid encounter geometry found in {attempts} attempts")]
    GeometryRejected { attempts: usize },
    #[error("cannot estimate a density from {got} samples (need at least {needed})")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples have zero spread along the {axis} axis")]
    ZeroSpread { axis: &'static str },
    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("weight grids do not match: {details}")]
    GridMismatch { details: String },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
