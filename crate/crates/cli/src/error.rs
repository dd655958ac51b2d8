use std::fmt::Display;

use multivar_core::Error as CoreError;

/// Validation problems exit with 2, everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 1,
        }
    }

    pub fn validation(msg: impl Display) -> Self {
        Self::Validation(msg.to_string())
    }

    pub fn runtime(msg: impl Display) -> Self {
        Self::Runtime(msg.to_string())
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, ctx: impl Display) -> Self {
        match self {
            Self::Validation(m) => Self::Validation(format!("{ctx}: {m}")),
            Self::Runtime(m) => Self::Runtime(format!("{ctx}: {m}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Dimension(_)
            | CoreError::TooShort { .. }
            | CoreError::Spec(_)
            | CoreError::InvalidArgument(_)
            | CoreError::NonFinite(_) => Self::Validation(e.to_string()),
            CoreError::Unstable { .. } | CoreError::Divergence { .. } | CoreError::NoValidCell(_) => {
                Self::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
