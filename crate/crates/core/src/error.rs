use thiserror::Error;

/// Errors surfaced by the prior, model and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// Recoverable sampling failure; callers usually resample.
    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    SamplingExhausted { attempts: usize, reason: String },

    #[error("non-finite value at subnode {node}")]
    NonFinite { node: usize },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("training fault at step {step}: {reason}")]
    TrainingFault { step: u64, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
