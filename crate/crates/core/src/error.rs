use thiserror::Error;

use crate::model::ParameterPoint;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimension mismatch, z pinned wrongly, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at data row {row} (file line {}): {message}", row + 1)]
    Parse { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    Optimizer {
        iterations: usize,
        grad_norm: f64,
        last: Box<ParameterPoint>,
    },

    #[error("negative Hessian is not positive definite at the terminal point")]
    Curvature { at: Box<ParameterPoint> },

    #[error("hyperparameter grid point {index} (log shape {log_shape:.4}) failed: {source}")]
    Grid {
        index: usize,
        log_shape: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("chain failed: {0}")]
    Chain(String),

    #[error("oracle refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
