use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid loss at index {index}: {value}")]
    InvalidLoss { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("population mismatch: expected {expected} points and losses, got {points} points and {losses} losses")]
    PopulationMismatch {
        expected: usize,
        points: usize,
        losses: usize,
    },

    #[error("budget {budget} is smaller than the population size {population}")]
    BudgetTooSmall { budget: u64, population: usize },

    #[error("unknown baseline `{0}`")]
    UnknownBaseline(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("descriptor does not match instance: {0}")]
    DescriptorMismatch(String),

    #[error("missing records: {0}")]
    MissingRecords(String),

    #[error("stopped after {completed} completed runs; rerun the same command to resume")]
    Interrupted { completed: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
