//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or input validation failure.
    #[error("invalid parameter: {0}")]
    Validation(String),

    /// A truncated series or product reached its index cap before the
    /// stopping criterion triggered.
    #[error("series did not converge: {context} (stopped at index {index}, last term {last_term:e})")]
    Convergence {
        context: String,
        index: u32,
        last_term: f64,
    },

    /// Predicted cancellation exceeds the precision budget; the result
    /// would be numerically meaningless, so we refuse to return it.
    #[error("conditioning failure in {context}: predicted relative error {predicted:.3e} exceeds budget {budget:.3e}")]
    Conditioning {
        context: String,
        predicted: f64,
        budget: f64,
    },

    /// Adaptive ODE integration could not proceed.
    #[error("ODE integration failed: {0}")]
    Integration(String),

    /// Malformed input data (CSV parsing and similar).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for the CLI: 1 validation, 2 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } | Error::Io(_) => 1,
            Error::Convergence { .. } | Error::Conditioning { .. } | Error::Integration(_) => 2,
        }
    }
}
