use thiserror::Error;

/// Errors raised by the decompositions, matrix functions, and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter vector has a non-finite entry at index {index}")]
    NonFiniteParameter { index: usize },

    #[error("operator must be symmetric for {0}")]
    NotSymmetric(&'static str),

    /// The Krylov recursion hit an invariant subspace: the next basis vector
    /// would be divided by a vanishing norm.
    #[error("breakdown at step {step}: residual norm {residual:e} below threshold {threshold:e}")]
    Breakdown {
        step: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("eigenvalue {eigenvalue:e} lies outside the domain of {function}")]
    Domain {
        function: &'static str,
        eigenvalue: f64,
    },

    #[error("matrix exponential overflows double precision (1-norm {norm:e})")]
    Overflow { norm: f64 },

    #[error("matrix is not positive definite: remaining diagonal {value:e} at index {index}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value produced by probe {index}")]
    NonFiniteProbe { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
