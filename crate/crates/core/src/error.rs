//! Error type shared by all modules.

use thiserror::Error;

/// Failures fall in two classes that map onto distinct CLI exit codes:
/// configuration errors (exit 2) and numerical failures (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument, precondition violation or malformed input file.
    #[error("config: {0}")]
    Config(String),

    /// The computation itself failed (CFL violation, stagnating CG,
    /// impossible fit window, ...).
    #[error("numerical: {0}")]
    Numerical(String),

    /// CG stagnated; carries the residual history for diagnosis.
    #[error("cg stagnation after {} iterations (residual {:.3e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    CgStagnation { history: Vec<f64> },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// CLI exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) | Error::CgStagnation { .. } => 3,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
