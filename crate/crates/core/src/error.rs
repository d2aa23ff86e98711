use std::path::PathBuf;

/// Errors raised anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "photon cutoff overflow: weight {weight:.3e} reached the highest Fock level \
         (n_max = {n_max}) at step {step}; increase bin_photon_cutoff or reduce dt"
    )]
    CutoffOverflow { weight: f64, n_max: usize, step: usize },

    #[error("guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config { line: usize, key: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { line, key: key.into(), message: message.into() }
    }

    /// True for failures of the numerical guards (cutoff overflow, size guards).
    pub fn is_numerical_guard(&self) -> bool {
        matches!(self, Error::CutoffOverflow { .. } | Error::GuardExceeded(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
