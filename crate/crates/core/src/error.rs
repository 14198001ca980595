use thiserror::Error;

/// Errors produced by synthesis, estimation and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design infeasible: {0}")]
    DesignInfeasible(String),

    #[error("iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("isolation not ready: step {step} is before the warmup of {warmup} steps")]
    NotReady { step: usize, warmup: usize },

    #[error("unstabilizable configuration: {0}")]
    UnstabilizableConfiguration(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("simulation diverged at step {step} (|x| = {norm:e})")]
    Diverged { step: usize, norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn infeasible(msg: impl Into<String>) -> Error {
    Error::DesignInfeasible(msg.into())
}
