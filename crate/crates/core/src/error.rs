use thiserror::Error;

/// Errors produced by model loading, enumeration, lifting and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// The model document is malformed; `field` names the offending entry.
    #[error("invalid model field `{field}`: {message}")]
    Parse { field: String, message: String },

    /// An enumeration or lift would exceed the configured budget.
    #[error("capacity exceeded: {what} needs {count} but the budget is {budget}")]
    Capacity { what: String, count: u128, budget: u128 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The joint measure passed to a flow step does not have the given marginal.
    #[error("state marginal of the joint measure deviates from mu by {deviation:e}")]
    MarginalMismatch { deviation: f64 },

    /// An iterative solver stopped at its iteration limit.
    #[error("no convergence after {iterations} iterations (last residual {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        spans: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn capacity(what: impl Into<String>, count: u128, budget: u128) -> Self {
        Error::Capacity {
            what: what.into(),
            count,
            budget,
        }
    }
}
