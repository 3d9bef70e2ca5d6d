use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The eigensolver hit its iteration cap. Carries the best residuals seen.
    #[error("eigensolver did not converge after {iterations} iterations (max residual {max_residual:.3e})")]
    ConvergenceFailure {
        iterations: usize,
        max_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("experiment aborted: {failed} of {total} trials failed to converge")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
