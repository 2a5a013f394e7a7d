use thiserror::Error;

/// Errors raised while building sources, running engines or evaluating bounds.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("photon-number cutoff J={truncation} leaves tail mass {tail_mass:e} above tolerance {tolerance:e}")]
    TailTooLarge {
        truncation: usize,
        tail_mass: f64,
        tolerance: f64,
    },

    #[error("degenerate source: {0}")]
    DegenerateSource(String),

    #[error("ratio condition violated: {0}")]
    ConditionViolated(String),

    #[error("degenerate denominator {value:e} (floor {floor:e})")]
    DegenerateDenominator { value: f64, floor: f64 },

    #[error("protocol has no vacuum source (p_0 = 0)")]
    MissingVacuumSource,

    #[error("fluctuation grid mass {mass} does not sum to 1")]
    GridTooCoarse { mass: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
