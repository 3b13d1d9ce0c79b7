use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("budget exceeded after {flips} flips{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    BudgetExceeded { flips: u64, context: Option<String> },
    #[error("all particles have zero weight at step {step}")]
    ParticleDeath { step: usize },
    #[error("contract violated: {0}")]
    ContractViolation(String),
    #[error("diagnostic failed: {0}")]
    DiagnosticFailed(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn budget(flips: u64) -> Self {
        Error::BudgetExceeded { flips, context: None }
    }

    /// Attach context to a budget error; other variants pass through.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::BudgetExceeded { flips, .. } => Error::BudgetExceeded {
                flips,
                context: Some(ctx.into()),
            },
            other => other,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}
