use thiserror::Error;

/// Errors shared by the model, solvers, instance builders and the
/// resisting oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation is well defined only on a restricted parameter range
    /// (typically p > 2) that the caller stepped outside of.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    /// An iterative kernel (root finder, Lanczos, line search) lost too much
    /// accuracy to continue.
    #[error("numerical breakdown: {0}")]
    Numerical(String),

    /// The resisting oracle ran out of Krylov directions to hide behind.
    #[error("adversary exhausted: {0}")]
    AdversaryExhausted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
