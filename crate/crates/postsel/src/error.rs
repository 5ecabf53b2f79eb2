//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by fitting and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative solver ran out of iterations.
    #[error("solver did not converge after {iterations} iterations (violation {violation:.3e})")]
    NonConvergence { iterations: usize, violation: f64 },

    /// A matrix required to be invertible was numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The truncation interval carries no usable Gaussian mass.
    #[error("degenerate truncation: {0}")]
    DegenerateTruncation(String),

    /// Inference was requested on a fit with an empty active set.
    #[error("nothing selected: the active set is empty")]
    NothingSelected,

    /// A numerical routine failed for a reason other than the above.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
