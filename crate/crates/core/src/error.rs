use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// Every distillation weight is numerically zero: the fitted logistic
    /// model saturates all predictions.
    #[error("all distillation weights are below 1e-12")]
    DegenerateWeights,

    #[error("partial Fisher information for variable {index} is degenerate ({value:e})")]
    DegenerateFisherInfo { index: usize, value: f64 },

    #[error("residual vector for variable {index} has (near) zero norm")]
    DegenerateResidual { index: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("covariance matrix is not symmetric positive definite")]
    CholeskyFailure,

    #[error("data split failed: {0}")]
    SplitError(String),

    #[error("output failed: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
