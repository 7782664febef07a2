//! Experiment runner for omnidirectional forests.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod results;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments; reported before any work starts.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] omniforest::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Runtime(omniforest::Error::InvalidConfig(_)) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}
