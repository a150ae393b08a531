//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate a structural constraint (lambda > mu >= 0, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// One of the model assumptions failed numerical validation.
    #[error("assumption {which} violated: {detail}")]
    AssumptionViolated { which: &'static str, detail: String },

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A numerical routine failed to converge to the requested tolerance.
    #[error("numeric failure in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    /// Coupling parameters cannot be realized at this K.
    #[error("infeasible coupling parameters: {0}")]
    Infeasible(String),

    /// Trajectory or statistic inputs are inconsistent with each other.
    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    /// Empty or undersized sample handed to a statistical routine.
    #[error("invalid sample: {0}")]
    Sample(String),

    /// Experiment configuration problem.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            detail: detail.into(),
        }
    }
}
