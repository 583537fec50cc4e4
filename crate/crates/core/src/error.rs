use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: missing column {column}")]
    MissingColumn { line: u64, column: usize },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("no interactions to build a dataset from")]
    EmptyInput,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("user {user} has {count} interactions, at least {needed} required")]
    InsufficientInteractions { user: u32, count: usize, needed: usize },
    #[error("dataset {name} has {interactions} interactions after pruning, at least {minimum} required")]
    DatasetTooSmall {
        name: String,
        interactions: usize,
        minimum: usize,
    },
    #[error("user {0} has no training interactions")]
    UnknownUser(u32),
    #[error("relevant set is empty")]
    EmptyRelevantSet,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("incomplete grid: {0}")]
    IncompleteGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("need at least {needed} datasets, found {found}")]
    TooFewDatasets { found: usize, needed: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("malformed ranking: {0}")]
    MalformedRanking(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "missing_column",
            Error::Parse { .. } => "parse_error",
            Error::EmptyFile => "empty_file",
            Error::EmptyInput => "empty_input",
            Error::EmptyDataset => "empty_dataset",
            Error::InsufficientInteractions { .. } => "insufficient_interactions",
            Error::DatasetTooSmall { .. } => "dataset_too_small",
            Error::UnknownUser(_) => "unknown_user",
            Error::EmptyRelevantSet => "empty_relevant_set",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::IncompleteGrid(_) => "incomplete_grid",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonFiniteInput(_) => "non_finite_input",
            Error::InvalidHyperparameter(_) => "invalid_hyperparameter",
            Error::EmptyGrid => "empty_grid",
            Error::TooFewDatasets { .. } => "too_few_datasets",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::MalformedRanking(_) => "malformed_ranking",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "json_error",
        }
    }
}
