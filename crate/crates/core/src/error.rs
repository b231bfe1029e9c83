use std::path::PathBuf;

use thiserror::Error;

use crate::env::TwinId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("calibration failed for twin {twin}: {reason}")]
    Calibration { twin: TwinId, reason: String },

    #[error("unknown twin {0}")]
    UnknownTwin(TwinId),

    #[error("time {t} s outside trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("weights are not normalized (sum = {0})")]
    Unnormalized(f64),

    #[error("empty particle set")]
    EmptyParticles,

    #[error("malformed input {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the user's configuration rather than a
    /// failure during the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Calibration { .. }
        )
    }
}
