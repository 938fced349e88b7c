use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("source at {distance:.3e} m from microphone {mic} is inside the near-field guard")]
    NearFieldSingularity { mic: usize, distance: f64 },

    #[error("matrix is not positive definite even with relative loading {loading:e}")]
    NotPsd { loading: f64 },

    #[error("truth generation failed for slot {slot} after {attempts} attempts")]
    GenerationFailed { slot: usize, attempts: usize },

    #[error("SNR is undefined: no valid target in any frame")]
    SnrUndefined,

    #[error("metric is undefined: no valid target-frame pairs")]
    UndefinedMetric,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
