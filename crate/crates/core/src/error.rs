use std::path::PathBuf;

use thiserror::Error;

use crate::lse::Observation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid input: {0}")]
    Input(String),

    /// Kernel factorization failed even at the largest jitter.
    #[error("numerical failure: {message} (jitter {jitter:e})")]
    Numerical { message: String, jitter: f64 },

    /// An operation was attempted in a state that does not allow it.
    #[error("invalid state: {0}")]
    State(String),

    /// A file did not parse; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The accuracy oracle failed mid-run. The observations gathered before
    /// the failure are preserved.
    #[error("oracle failed after {} observations: {message}", history.len())]
    Oracle {
        message: String,
        history: Vec<Observation>,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } => 2,
            Error::Numerical { .. } => 3,
            Error::Format { .. } => 4,
            Error::Input(_) | Error::State(_) | Error::Oracle { .. } => 1,
        }
    }
}
