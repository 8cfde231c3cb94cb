use thiserror::Error;

/// Errors raised by the library. Each variant maps to one failure class so
/// callers (CLI, FFI) can translate it into an exit or status code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("barrier value {h} is at or below the boundary tolerance {eps}; the stochastic condition needs an interior state")]
    Boundary { h: f64, eps: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Boundary { .. } => "boundary",
            Error::Contract(_) => "contract",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Error {
    Error::Io { path: path.as_ref().display().to_string(), message: err.to_string() }
}
