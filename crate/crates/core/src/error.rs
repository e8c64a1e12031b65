use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum PmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("densities live on different meshes")]
    MeshMismatch,

    #[error("map sequence exhausted: need indices up to {needed}, have {available}")]
    SequenceExhausted { needed: usize, available: usize },

    #[error("preimage-tree depth {0} exceeds the limit of {max}", max = crate::transfer::MAX_EXACT_DEPTH)]
    DepthLimit(usize),

    #[error("root iteration failed to converge for beta={beta}, y={y}")]
    Convergence { beta: f64, y: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("arc iteration did not cover the circle within {0} steps")]
    CoverGuard(usize),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PmError>;
