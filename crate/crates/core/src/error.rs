//! Shared error type for the sampler, diagnostics, and harness.

use thiserror::Error;

/// Errors surfaced by validation, sampling, and bound evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Step size too large for a stable chain on the given target.
    #[error("step size {h} is not stable here; it must lie below {limit}")]
    Unstable { h: f64, limit: f64 },

    /// Step size above the range certified by the error bound.
    #[error("step size {h} exceeds the certified threshold {h1}")]
    AboveCertifiedStep { h: f64, h1: f64 },

    /// A chain produced a non-finite coordinate.
    #[error("replica {replica} diverged at step {step}: non-finite state")]
    Diverged { replica: u64, step: u64 },

    /// The mixing-time search hit its iterate cap before reaching the target.
    #[error("mixing-time search exhausted the iterate cap {cap}")]
    MixingNotReached { cap: u64 },

    /// No step in the supplied grid can mix to the requested accuracy.
    #[error("no step in the grid reaches accuracy {eps}; add smaller step sizes")]
    EpsUnreachable { eps: f64 },

    /// A bound needs the third-derivative constant G and none is set.
    #[error("curvature constant G is not set; estimate it or supply it in the config")]
    MissingG,

    /// Malformed or inconsistent configuration input.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while reading config or writing reports.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
