use thiserror::Error;

/// Errors raised by the workbench.
///
/// Configuration problems (bad shapes, invalid probabilities, out-of-range
/// parameters) are separated from resource limits and domain violations so
/// the CLI can map them onto distinct exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    /// A truncated law whose support is empty, or a rejection sampler that
    /// gave up. `typical_prob` carries the exact mass of the acceptance set
    /// when it is known.
    #[error("empty or unreachable typical set: {reason} (exact typical probability {typical_prob:?})")]
    EmptyTypicalSet {
        reason: String,
        typical_prob: Option<f64>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
