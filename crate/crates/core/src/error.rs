use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("mixed outcome types")]
    MixedOutcomeTypes,
    #[error("duplicate unit id {0:?}")]
    DuplicateId(String),
    #[error("no treated units")]
    NoTreated,
    #[error("no control units")]
    NoControl,
    #[error("M=0")]
    EmptyAssignment,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("unit used twice: {0}")]
    DuplicateUse(String),
    #[error("division by zero: {0}")]
    ZeroDenominator(&'static str),
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("outcomes must be {0}")]
    OutcomeKind(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("budget exceeded after {nodes} nodes (incumbent {incumbent:?}, bound {bound})")]
    BudgetExceeded {
        nodes: usize,
        incumbent: Option<f64>,
        bound: f64,
    },
    #[error("internal consistency failure: {0}")]
    Consistency(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
