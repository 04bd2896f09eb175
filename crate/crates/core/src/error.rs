use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A loss term evaluated to NaN or infinity.
    #[error("non-finite value in {term}: {value}")]
    NonFinite { term: &'static str, value: f64 },

    /// A probability sat on or outside the boundary of (0, 1).
    #[error("{context}: probability {value} outside the open interval (0, 1)")]
    Domain { context: &'static str, value: f64 },

    #[error("training diverged at epoch {epoch}: {term} became {value}")]
    TrainingDiverged {
        epoch: usize,
        term: &'static str,
        value: f64,
    },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("ingestion failed for {}: {}", path.display(), problems.join("; "))]
    Ingestion { path: PathBuf, problems: Vec<String> },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
