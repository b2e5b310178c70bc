use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while reading, validating or reshaping datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv at record {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column '{column}': '{value}' is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': non-finite value {value}")]
    NonFinite {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("column '{0}' has no role in the schema")]
    UnmappedColumn(String),
    #[error("schema names column '{0}' which is not in the file")]
    MissingColumn(String),
    #[error("per-task feature column '{column}' must be named <feature>@<target>")]
    BadTaskFeature { column: String },
    #[error("dataset needs at least one feature column")]
    NoFeatures,
    #[error("dataset needs at least one target column")]
    NoTargets,
    #[error("dataset needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of bounds for {what} of size {len}")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid result document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Numerical failures from the least-squares and moment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("zero variance: {0} is undefined")]
    ZeroVariance(&'static str),
    #[error("zero range: nrmse is undefined")]
    ZeroRange,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular matrix: {0}")]
    Singular(&'static str),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("unknown sweep axis '{0}'")]
    UnknownAxis(String),
    #[error("unknown check '{0}'")]
    UnknownCheck(String),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
