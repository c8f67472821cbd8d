use std::path::PathBuf;

use mvfuse_core::ErrorClass;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// A missing or invalid configuration entry, named by its key path.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: mvfuse_core::Error,
    },
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn output(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Output {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Output { .. } => 3,
            CliError::Stage { source, .. } => match source.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            },
        }
    }
}

/// Attaches a pipeline stage name to core errors.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for mvfuse_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
