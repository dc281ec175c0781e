use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    InvalidValue {
        row: u64,
        column: String,
        message: String,
    },

    #[error("at least two groups required, found {0}")]
    TooFewGroups(usize),

    #[error("dataset is empty")]
    Empty,

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("budget {budget} out of range 0..={n}")]
    BudgetOutOfRange { budget: usize, n: usize },

    #[error("budget mismatch: {0} vs {1}")]
    BudgetMismatch(usize, usize),

    #[error("rate {0} out of range (0, 1]")]
    RateOutOfRange(f64),

    #[error("harm undefined: {0}")]
    UndefinedHarm(String),

    #[error("harm `{0}` is not monotone in the group selection count")]
    NonMonotoneHarm(String),

    #[error("group keys do not match: {0}")]
    KeyMismatch(String),

    #[error("instance too large to enumerate ({0} count vectors, limit 1000000)")]
    TooLarge(u128),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
