use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid ensemble: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("xi not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver did not converge")]
    EigenNoConvergence,

    #[error("matrix is singular (pivot {pivot:e} vs scale {scale:e})")]
    Singular { pivot: f64, scale: f64 },

    #[error("Newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        last: Complex64,
        last_xi: Complex64,
        residual: f64,
        iterations: usize,
    },

    #[error("eigenvalue {k} is not separated from the rest of the spectrum (gap {gap:e})")]
    DegenerateEigenvalue { k: usize, gap: f64 },

    #[error("xi and zeta are not diagonal in the supplied basis (off-diagonal norm {off_diagonal:e})")]
    NonCommuting { off_diagonal: f64 },

    #[error("theory curve and Monte-Carlo histogram do not overlap")]
    EmptyOverlap,

    #[error("{0}")]
    Config(String),
}
