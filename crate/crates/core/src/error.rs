use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input data that fails a structural check (e.g. probabilities that do not sum to one).
    #[error("validation error: {0}")]
    Validation(String),

    /// A parameter outside its admissible range.
    #[error("parameter error: {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation produced or consumed a non-finite number.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// An iterative solver did not converge.
    #[error("solver error: {message} (time level {time_level}, {iterations} iterations)")]
    Solver {
        message: String,
        time_level: usize,
        iterations: usize,
    },

    /// Requested work exceeds a hard limit of the routine.
    #[error("limit exceeded: {0}")]
    Limit(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            value,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Parameter { .. } | Error::Domain(_) | Error::Limit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
