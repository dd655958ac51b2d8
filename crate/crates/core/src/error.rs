use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("series too short: need at least {required} time points, got {actual}")]
    TooShort { required: usize, actual: usize },

    #[error("model is not stable: spectral radius {radius:.6} is not below {margin}")]
    Unstable { radius: f64, margin: f64 },

    #[error("invalid design: {0}")]
    Spec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver diverged at iteration {iteration} with step size {step:e}")]
    Divergence { iteration: usize, step: f64 },

    #[error("non-finite value in input: {0}")]
    NonFinite(String),

    #[error("no grid cell could be evaluated: {0}")]
    NoValidCell(String),
}

pub type Result<T> = std::result::Result<T, Error>;
