use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator and its supporting codecs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed stream at triplet {index}: {reason}")]
    Format { index: usize, reason: String },

    #[error("accumulator overflow: {0}")]
    Overflow(String),

    #[error("schedule fault: {0}")]
    ScheduleFault(String),

    #[error("deadlock at DS tick {tick}: {detail}")]
    Deadlock { tick: u64, detail: String },

    #[error("incomplete simulation: {0}")]
    IncompleteSimulation(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
