use thiserror::Error;

/// Errors raised by simulation, averaging and filtering routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),

    /// A model function left the domain its assumptions require.
    #[error("model violation: {what} at {point}")]
    ModelViolation { what: String, point: String },

    #[error("integration failure at t={time}: {detail}")]
    IntegrationFailure { time: f64, detail: String },

    #[error("stiffness rejected: dt_fast={dt_fast} exceeds limit {limit}")]
    StiffnessRejected { dt_fast: f64, limit: f64 },

    #[error("extrapolation error: query {query} outside lattice [{lo}, {hi}] on axis {axis}")]
    Extrapolation {
        axis: usize,
        query: f64,
        lo: f64,
        hi: f64,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. } | Error::ModelViolation { .. } | Error::Extrapolation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
