use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is numerically degenerate")]
    DegenerateMatrix,

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: &'static str },

    #[error("no bracket found for root solve")]
    NoBracket,

    #[error("optimizer did not converge: gradient max-norm {grad_norm:.3e} after {iterations} iterations")]
    NonConvergence { grad_norm: f64, iterations: usize },

    #[error("basis functions are collinear over the pooled support")]
    CollinearBasis,

    #[error("bootstrap degenerate: {failures} failed evaluations over {replicates} replicates")]
    BootstrapDegenerate { failures: usize, replicates: usize },

    #[error("invalid input: {0}")]
    BadInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
