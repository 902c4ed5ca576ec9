use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments that violate an operation's preconditions (shapes, ranges, names).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("incompatible weights for layer {layer}: {detail}")]
    IncompatibleWeights { layer: String, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Zero-variance differences with a nonzero mean; the t statistic is undefined.
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("row {row}: field {field} has invalid value {value:?}")]
    Validation {
        row: usize,
        field: String,
        value: String,
    },

    #[error("row {row}: duplicate score for rater {rater_id:?} and image {image_id:?}")]
    Duplicate {
        row: usize,
        rater_id: String,
        image_id: String,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
