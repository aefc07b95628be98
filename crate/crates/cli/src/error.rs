use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{context}: {source}")]
    Module {
        context: String,
        #[source]
        source: pxfb::Error,
    },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code: 2 validation, 3 nonconvergence, 4 certification
    /// failure, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Module { source, .. } => match source {
                pxfb::Error::NonConvergence { .. } => 3,
                pxfb::Error::Domain(_) | pxfb::Error::GridMismatch(_) | pxfb::Error::PreconditionViolated(_) => 2,
                _ => 1,
            },
            CliError::Certification(_) => 4,
            _ => 1,
        }
    }
}

/// Wraps module errors with the experiment step that raised them.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for pxfb::Result<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Module { context: what.into(), source })
    }
}
