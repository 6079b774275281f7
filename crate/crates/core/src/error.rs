use thiserror::Error;

/// Errors raised anywhere in the anonymization pipeline and its evaluators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("no records match the conditioning prefix")]
    EmptyCondition,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("infeasible k: k = {k} exceeds the number of records n = {n}")]
    Infeasible { k: usize, n: usize },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
