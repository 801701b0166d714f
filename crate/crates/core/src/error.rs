use thiserror::Error;

/// Errors produced anywhere in the link model, simulator and analyzers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A state machine was handed a state it can never reach.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A numeric argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario or run configuration is malformed or violates a range check.
    #[error("config error: {0}")]
    Config(String),

    /// External data (stats tables, event streams) is inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// Decoy bounds were requested in a regime where they are undefined.
    #[error("undefined bound: {0}")]
    UndefinedBound(String),

    /// Calibration targets admit no physical solution.
    #[error("calibration error: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
