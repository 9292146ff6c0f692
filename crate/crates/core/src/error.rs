use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every module in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient groups: need at least 2 non-empty groups, found {found}")]
    InsufficientGroups { found: usize },

    #[error("ground-truth labels are required for this metric")]
    MissingTruths,

    #[error("group {group:?} has undefined {rate}: no {missing} truth labels")]
    DegenerateGroup {
        group: String,
        rate: &'static str,
        missing: &'static str,
    },

    #[error("corrupt sparse update: {0}")]
    CorruptUpdate(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("line {line}, column {column:?}: {message}")]
    Row {
        line: u64,
        column: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
