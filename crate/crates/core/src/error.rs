use thiserror::Error;

use crate::units::EdgePair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    /// The sampled differential input lies outside the VTC input range. The
    /// clipped conversion is carried so callers may continue with it.
    #[error("input {diff} outside the VTC input range [-1, 1]")]
    RangeExceeded { diff: f64, clipped: EdgePair },

    #[error("edge pair {sample_index} has polarity {found:?}, expected {expected:?}")]
    PolaritySequence {
        sample_index: u64,
        expected: crate::Polarity,
        found: crate::Polarity,
    },

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("no signal power at bin {bin}")]
    NoSignal { bin: usize },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
