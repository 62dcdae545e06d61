use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions or invalid configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke an ordering or state precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged at iteration {iter}: {reason}")]
    Diverged { iter: usize, reason: String },
    #[error("incomplete grid, missing cells: {}", missing.join(", "))]
    IncompleteGrid { missing: Vec<String> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag, used by the CLI error list.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Contract(_) => "contract",
            Error::Diverged { .. } => "diverged",
            Error::IncompleteGrid { .. } => "incomplete_grid",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
