//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad key, bad value, shape mismatch in a config).
    #[error("configuration error: {0}")]
    Config(String),
    /// Runtime dimension mismatch between points, directions, and networks.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A loss, coefficient, or gradient evaluated to a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The primal network collapsed (normalization denominator below 1e-12).
    #[error("degenerate network: {0}")]
    Degenerate(String),
    /// An iterative solver exhausted its iteration budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// Malformed or inconsistent checkpoint data.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
