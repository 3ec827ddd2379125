use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraint.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("lane index {index} out of range (field has {lanes} lanes)")]
    LaneOutOfRange { index: usize, lanes: usize },

    #[error("row estimate degenerate: {0}")]
    DegenerateRows(String),

    #[error("no ground-truth row within {gate:.3} m of the predicted segment")]
    Association { gate: f64 },

    #[error("cannot aggregate an empty record set")]
    EmptyRecords,

    #[error("failed to parse {path} at `{key}`: {message}")]
    Parse {
        path: PathBuf,
        key: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Output(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
