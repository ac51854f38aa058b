use thiserror::Error;

/// Errors raised by the analytic pipeline and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    #[error("block too large: L/2 = {half_block} exceeds available pool {pool}")]
    BlockTooLarge { half_block: f64, pool: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("empty sift: no Z-window clicks to build keys from")]
    EmptySift,

    #[error("pool exhausted: need {needed} bits, {available} available")]
    PoolExhausted { needed: usize, available: usize },

    #[error("population {0} does not fit a 64-bit counter")]
    Overflow(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain { func, detail: detail.into() }
}
