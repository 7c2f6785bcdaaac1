//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("network is invalid: {0}")]
    InvalidNetwork(String),

    #[error("kron reduction failed: passive/STATCOM block is singular, offending nodes {nodes:?}")]
    SingularReduction { nodes: Vec<String> },

    #[error("operating condition is invalid: {0}")]
    InvalidOperatingCondition(String),

    #[error("device model error: {0}")]
    Device(String),

    #[error("no device equilibrium: {0}")]
    NoEquilibrium(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("channel `{0}` not found on system")]
    MissingChannel(String),

    #[error("smallest grid-strength eigenvalue is degenerate (gap {gap:.3e}); participation factors are unreliable")]
    DegenerateEigenvalue { gap: f64 },

    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("bisection trace is not monotone: stable at {stable_at} but unstable at {unstable_at}")]
    NonMonotone { stable_at: f64, unstable_at: f64 },

    #[error("rational fit did not converge after {iterations} iterations (best max relative error {best_error:.3e})")]
    FitNotConverged { iterations: usize, best_error: f64 },

    #[error("schedule has no certified gains covering iq_sigma = {iq_sigma} (sample {sample_index}{})",
            last_safe_interval.map(|i| format!("; holding last safe interval {i}")).unwrap_or_default())]
    ScheduleGap { iq_sigma: f64, sample_index: usize, last_safe_interval: Option<usize> },

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
