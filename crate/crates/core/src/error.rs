//! Error type shared by all solver components.

use thiserror::Error;

/// Errors produced by geometry, approximation and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input values outside the operation's domain (non-finite entries,
    /// non-positive scale parameters, asymmetric matrices, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix expected to have full column rank does not.
    #[error("rank deficient input: column {col} is numerically dependent")]
    RankDeficient { col: usize },

    /// The manifold does not implement the requested map.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// API misuse, e.g. tangent vectors based at different points.
    #[error("usage error: {0}")]
    Usage(String),

    /// The objective returned a non-finite value.
    #[error("objective evaluated to {value} at a point on {manifold} (first coords {head:?})")]
    Evaluation {
        value: f64,
        manifold: String,
        head: Vec<f64>,
    },

    /// Failed to build a geometric object (e.g. a tangent basis).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// An iterative numerical routine did not converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The cubic subproblem solver could not meet its stopping conditions.
    #[error(
        "subproblem solver failed: |grad m| = {grad_norm:.3e} exceeds threshold {threshold:.3e}"
    )]
    SubsolverFailure { grad_norm: f64, threshold: f64 },

    /// Invalid solver configuration.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
