use thiserror::Error;

/// Errors shared by all simulation and statistics modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation
    /// (e.g. an impact parameter with |w| >= 1). Inputs are rejected, never
    /// clamped.
    #[error("domain error: {0}")]
    Domain(String),

    /// A geometric precondition of the billiard is violated (point off the
    /// sphere, start position inside a scatterer, overlapping scatterers).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A query outside the range covered by a trajectory or table.
    #[error("range error: {0}")]
    Range(String),

    /// Not enough data to form the requested estimate.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A configured resource cap (memory, step count) would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// An iteration failed to converge within its budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Malformed external input (theta table CSV, config fragments).
    #[error("invalid input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
