use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dhg::Error),
    #[error("invalid configuration: `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Json(_) => 2,
            CliError::Core(dhg::Error::Config { .. }) => 2,
            CliError::Core(dhg::Error::TrainingDiverged { .. } | dhg::Error::SimulationDiverged { .. }) => 3,
            _ => 1,
        }
    }
}

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> CliResult<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> CliResult<T> {
        self.map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })
    }
}
