use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: mfgc_core::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub fn config(msg: impl Into<String>) -> Self {
        ExperimentError::Config(msg.into())
    }

    /// Process exit code: 3 for configuration errors, 2 for numerical and
    /// i/o failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Attaches context to a core error.
pub trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for mfgc_core::Result<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| ExperimentError::Numerical { context: ctx(), source })
    }
}
