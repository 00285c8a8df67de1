use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("non-binary output column '{column}': found {distinct} distinct values")]
    NonBinaryOutput { column: String, distinct: usize },

    #[error("unparseable cell at row {row}, column '{column}': '{value}'")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),

    #[error("invalid binarization mapping: {0}")]
    Mapping(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid chain order: {0}")]
    InvalidOrder(String),

    #[error("model width {width} exceeds the exact enumeration threshold {threshold}; use sampled mode")]
    WidthAboveThreshold { width: usize, threshold: usize },

    #[error("invalid training configuration: {0}")]
    TrainConfig(String),

    #[error("invalid model record: {0}")]
    ModelFormat(String),

    #[error("invalid report: {0}")]
    Report(String),

    #[error("config error in '{field}': {message}")]
    Config { field: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. }
            | Error::TrainConfig(_)
            | Error::InvalidOrder(_)
            | Error::WidthAboveThreshold { .. }
            | Error::Mapping(_) => ErrorCategory::Config,
            Error::Numerical(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}
