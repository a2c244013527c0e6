use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("non-uniform sampling at row {row}: dt {found} differs from {expected}")]
    NonUniformSampling {
        row: usize,
        expected: f64,
        found: f64,
    },

    #[error("non-finite sample at channel {channel}, step {step}")]
    NonFinite { channel: usize, step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("signal too short: need at least {needed} steps, got {got}")]
    SignalTooShort { needed: usize, got: usize },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("diverged at step {step}")]
    Diverged { step: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("fewer than two spectral peaks found; choose the cutoff manually")]
    TooFewPeaks,

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
