//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: &'static str, message: String },

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("invalid distribution parameters: {0}")]
    Parameter(String),

    #[error("tree structure error: {0}")]
    Tree(String),

    #[error("numerical failure in step {step} (equation {equation:?}, sweep {sweep}): {message}")]
    Numerical {
        step: &'static str,
        equation: Option<usize>,
        sweep: usize,
        message: String,
    },

    #[error("identification error: {0}")]
    Identification(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("date alignment error: {0}")]
    Alignment(String),

    #[error("missing value in column `{column}` at {date}")]
    MissingValue { column: String, date: String },

    #[error("draw store error: {0}")]
    Store(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("too few draws: {0}")]
    TooFewDraws(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            field,
            message: message.into(),
        }
    }
}
