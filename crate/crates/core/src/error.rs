use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed cell or record in an input table. `row` is the 1-based
    /// line number in the file (the header is line 1).
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The penalty weight g(x) cannot be computed for the listed features.
    #[error("penalty weight undefined for {}: {reason}", features.join(", "))]
    UndefinedWeight { features: Vec<String>, reason: String },

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user-supplied settings rather than by
    /// data or the environment.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
