use thiserror::Error;

/// Errors raised while building operators or solving a mesh-based problem.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MbsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate mesh points at {0}")]
    DuplicatePoints(f64),

    #[error("value {x} lies outside the mesh domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero averaged-width normalizer at row {0}")]
    SingularNormalizer(usize),

    #[error("interpolation neighborhood is not unisolvent for observation {0}")]
    SingularNeighborhood(usize),

    #[error("interpolation design is numerically singular (condition estimate {0:.3e})")]
    SingularDesign(f64),

    #[error("normal matrix is not positive definite (pivot {pivot} at row {row})")]
    FactorizationFailure { row: usize, pivot: f64 },

    #[error("interpolation restricted to the penalty null space is rank deficient ({rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },
}

pub type Result<T> = std::result::Result<T, MbsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MbsError::InvalidArgument(msg.into()))
}
