use std::fmt;

/// Errors raised by the models, the solver, the simulator and the config layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of a function.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A model or run configuration violates one of its invariants.
    #[error("configuration error [{key}]: {message}")]
    Config { key: String, message: String },

    /// A config file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    /// A lookup reached past the end of a precomputed table.
    #[error("horizon error: {0}")]
    Horizon(String),

    /// An internal consistency check failed (zero-probability conditioning,
    /// interpolation outside the grid, policy lookup failure).
    #[error("logic error: {0}")]
    Logic(String),

    /// A policy column did not have the Idle* Sense* Transmit* shape.
    #[error("threshold structure violated at t={t}: {pattern}")]
    Structure { t: f64, pattern: ActionPattern },

    /// An iterative method failed to reach its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than by the computation.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse { .. } | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Compact rendering of a policy column, one character per belief node
/// (`I`, `S`, `T`), used to report structural violations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionPattern(pub String);

impl fmt::Display for ActionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
