use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the routine.
    #[error("domain error: {0}")]
    Domain(String),
    /// A structural precondition on the inputs was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A requested order exceeds a configured capacity.
    #[error("capacity exceeded: requested {requested}, limit {limit}")]
    Capacity { requested: usize, limit: usize },
    /// A constraint in a Gaussian conditioning problem is linearly dependent on the others.
    #[error("degenerate constraint #{index}: {reason}")]
    DegenerateConstraint { index: usize, reason: String },
    /// A constraint program has no feasible path.
    #[error("infeasible program: {0}")]
    Infeasible(String),
    /// A least-squares fit could not be formed.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
