//! Error type shared by every module of the engine.

use thiserror::Error;

/// Errors raised by model evaluation, estimation and test construction.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Parameter or data outside the admissible domain of a model or operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A log-density, score or matrix entry evaluated to NaN or infinity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The optimizer hit its iteration budget.
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    /// A matrix that must be inverted is singular or too ill-conditioned.
    #[error("singular information matrix: {0}")]
    SingularInfo(String),

    /// Restriction Jacobian or regressor matrix lacks full rank.
    #[error("rank error: {0}")]
    Rank(String),

    /// Likelihood-ratio statistic is negative beyond round-off, which signals a failed fit.
    #[error("negative likelihood-ratio statistic {0:.3e}; one of the fits did not reach its optimum")]
    NegativeLr(f64),

    /// Lagrange multipliers requested from a fit that carries none.
    #[error("absent: {0}")]
    Absent(String),

    /// Sample with zero variance or otherwise unusable moments.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// The robust spatial adjustment lost positivity of its denominator.
    #[error("degenerate adjustment: {0}")]
    DegenerateAdjustment(String),

    /// Sequential test ran out of observations before reaching its horizon.
    #[error("stream exhausted after {available} observations (plan requires {required})")]
    StreamExhausted { available: usize, required: usize },

    /// Unknown model, generator or statistic name.
    #[error("unknown name: {0}")]
    UnknownName(String),

    /// Dimension mismatch between vectors, matrices or partitions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Short stable name of the variant, used to tally failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Numeric(_) => "numeric",
            Error::NoConvergence { .. } => "no_convergence",
            Error::SingularInfo(_) => "singular_info",
            Error::Rank(_) => "rank",
            Error::NegativeLr(_) => "negative_lr",
            Error::Absent(_) => "absent",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::DegenerateAdjustment(_) => "degenerate_adjustment",
            Error::StreamExhausted { .. } => "stream_exhausted",
            Error::UnknownName(_) => "unknown_name",
            Error::Dimension(_) => "dimension",
        }
    }
}
