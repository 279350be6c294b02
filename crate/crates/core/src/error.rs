//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes surfaced by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A value is outside its mathematical domain (negative variance,
    /// angle outside the quarter circle, zero pilot count, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke an API contract: mismatched dimensions, a model applied
    /// to a scenario it was not trained for, an empty result table.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input is degenerate for the requested operation (e.g. an all-zero
    /// channel has no phase-matched beamformer).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    /// A numerical routine failed to converge (SVD iteration limit).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
