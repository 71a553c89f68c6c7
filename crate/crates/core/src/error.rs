use thiserror::Error;

use crate::chart::ChartError;
use crate::poly::AlgebraError;

/// Crate-wide error type. Module-level errors convert into it so pipeline
/// code can use one `Result` alias.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Defspace(#[from] crate::defspace::DefspaceError),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
    #[error("{code}: {message}")]
    Check { code: String, message: String },
    #[error("numerical step failed: {0}")]
    Numeric(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// A named verification failure. `code` is a stable dotted tag, e.g.
    /// `euler.not_euler_like`, used in reports and exit status decisions.
    pub fn check(code: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Check {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn code(&self) -> &str {
        match self {
            Error::Chart(_) => "chart.invalid",
            Error::Algebra(_) => "algebra.error",
            Error::Defspace(e) => e.code(),
            Error::Flow(e) => e.code(),
            Error::Check { code, .. } => code,
            Error::Numeric(_) => "numeric.failure",
            Error::Invalid(_) => "input.invalid",
            Error::Io(_) => "io.error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
