use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("eigendecomposition did not converge")]
    NumericalFailure,

    #[error("non-positive price for asset {asset} at {date}")]
    NonPositivePrice { asset: String, date: String },

    #[error("empty index range")]
    EmptyRange,

    #[error("insufficient history: need at least {required} observations, got {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    #[error("correlation scenario is not positive definite")]
    ScenarioNotSpd,

    #[error("degenerate factor: loadings vanish after neutralization")]
    DegenerateFactor,

    #[error("universe mismatch: factor covers {factor} assets, modes cover {modes}")]
    UniverseMismatch { factor: usize, modes: usize },

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("parameters do not match series: {0}")]
    ParamsMismatch(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
