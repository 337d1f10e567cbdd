use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unknown level `{value}` in column `{column}` (row {row})")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-numeric feature value in column `{column}` (row {row})")]
    NonNumericFeature { row: usize, column: String },
    #[error("missing value in column `{column}` (row {row})")]
    MissingValue { row: usize, column: String },
    #[error("label must be 0 or 1, found `{value}` (row {row})")]
    InvalidLabel { row: usize, value: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("split would leave the {0} part empty")]
    EmptySplit(&'static str),
    #[error("insufficient data to train `{model}`: {reason}")]
    InsufficientData { model: String, reason: String },
    #[error("shape mismatch: expected {expected} features, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("reporting group must be fully specified")]
    PartialInput,
    #[error("report is not a truthful option for the agent's group")]
    NonTruthfulReport,
    #[error("report is not an available option of the interface")]
    UnavailableOption,
    #[error("{0} group attributes exceed the enumeration limit of 8; set ordering constraints or a tree cap")]
    TooManyAttributes(usize),
    #[error("model `{0}` not found")]
    UnknownModel(String),
    #[error("invalid artifact: {0}")]
    InvalidArtifact(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
