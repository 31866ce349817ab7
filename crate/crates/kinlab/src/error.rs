use thiserror::Error;

/// Errors surfaced by ensemble construction, kernels, and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// Unreadable or malformed input data (CSV ensembles, series files).
    #[error("input error: {0}")]
    Input(String),

    /// A precondition on an operation was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sampled relative speed exceeded the configured majorant.
    #[error("majorant violation: sampled projected speed {sampled} exceeds g_max {g_max} in cell {cell:?}")]
    MajorantViolation {
        sampled: f64,
        g_max: f64,
        cell: [i64; 3],
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
