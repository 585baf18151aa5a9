use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{column}`, row {row}: cannot parse `{token}` as a number")]
    NonNumericValue {
        column: String,
        row: usize,
        token: String,
    },
    #[error("column `{column}`, row {row}: missing value")]
    MissingValue { column: String, row: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("test fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("response {y} is outside the support of the {family} family")]
    SupportViolation { family: String, y: f64 },
    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),
    #[error("probability {0} is outside (0, 1)")]
    BadProbability(f64),
    #[error("expectile level {0} is outside (0, 1)")]
    BadTau(f64),
    #[error("maximum likelihood did not converge (gradient norm {grad_norm:.3e} after {iterations} iterations)")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("row width {got} does not match the model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("too few rows: {got} rows, need at least {needed}")]
    TooFewRows { got: usize, needed: usize },
    #[error("sum of |y| is zero")]
    ZeroDenominator,
    #[error("no candidate family could be fitted")]
    AllCandidatesFailed,
    #[error("feature `{0}` is categorical")]
    CategoricalUnsupported(String),
    #[error("unknown family `{name}`; valid families: {valid}")]
    UnknownFamily { name: String, valid: String },
    #[error("{0} is not supported by the {1} family")]
    Unsupported(&'static str, String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
