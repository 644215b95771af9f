use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A query beyond the range covered by a precomputed grid.
    #[error("range error: {what} = {value} exceeds grid limit {limit}")]
    Range { what: &'static str, value: f64, limit: f64 },

    /// Invalid experiment configuration (replicate counts, bounds, ...).
    #[error("config error: {0}")]
    Config(String),

    /// The integro-ODE solution lost monotonicity.
    #[error("solver fault at z = {z}: {reason}")]
    SolverFault { z: f64, reason: String },

    /// An expansion plateau failed to settle across the fit window.
    #[error("plateau not converged: drift {drift:e} exceeds tolerance {tolerance:e}")]
    Plateau { drift: f64, tolerance: f64 },

    /// Least-squares design matrix is rank deficient or the window is too small.
    #[error("fit error: {0}")]
    Fit(String),

    /// An operation was invoked before its prerequisite was computed.
    #[error("sequencing error: {0}")]
    Sequencing(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
