use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0:#}")]
    Config(anyhow::Error),
    #[error("stage `{stage}` failed: {source:#}")]
    Stage { stage: String, source: anyhow::Error },
}

impl CliError {
    pub fn stage(stage: impl Into<String>, source: anyhow::Error) -> Self {
        CliError::Stage { stage: stage.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Stage { .. } => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
