use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("all resampling weights are zero or non-finite at step {step}")]
    AllZeroWeights { step: usize },

    #[error(
        "no consistent gamma: probe {probe}, entry ({row}, {col}) has relative residual {residual:e}"
    )]
    NoConsistentGamma {
        probe: usize,
        row: usize,
        col: usize,
        residual: f64,
    },

    #[error("importance weights sum to zero")]
    DegenerateWeights,

    #[error("coarse state must be given exactly at even fine steps (step {step})")]
    CoarseStateMismatch { step: usize },

    #[error("level {level}: {source}")]
    AtLevel { level: u32, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_level(self, level: u32) -> Self {
        Error::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}
