use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("index {index} out of range for {context} of size {size}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        size: usize,
    },

    #[error("path {path} has delay of {delay_chips} chips, outside the {taps}-tap correlation window")]
    DelayOutsideWindow {
        path: usize,
        delay_chips: usize,
        taps: usize,
    },

    #[error("no detection: {0}")]
    NoDetection(&'static str),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot write output to {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn in_trial(self, trial: u64) -> Self {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }
}
