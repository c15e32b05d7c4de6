use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unsupported query: {0}")]
    Unsupported(String),

    #[error("query budget of {cap} exceeded")]
    BudgetExceeded { cap: u64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("corrupt family: {0}")]
    CorruptFamily(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
