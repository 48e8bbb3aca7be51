use thiserror::Error;

use crate::privstate::PrivacyDiagnostics;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank error: matrix has rank {rank}, expected {expected}")]
    Rank { rank: usize, expected: usize },

    #[error("twisting extraction failed: state is not private ({diagnostics:?})")]
    Extraction { diagnostics: Box<PrivacyDiagnostics> },

    #[error("degenerate measurement family: {0}")]
    DegenerateFamily(String),

    #[error("resource cap exceeded: dimension {dim} > cap {cap}")]
    ResourceCap { dim: usize, cap: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
