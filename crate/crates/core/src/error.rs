use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("simulation diverged at step {step} (dt = {dt:e}): {detail}")]
    SimulationDiverged { step: usize, dt: f64, detail: String },

    #[error("training diverged at iteration {iteration}: {detail}")]
    TrainingDiverged { iteration: u64, detail: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
