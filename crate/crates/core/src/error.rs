use thiserror::Error;

/// Errors raised by oracles, solvers and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("dual point outside the conjugate domain (violation {violation:.3e})")]
    DualInfeasible { violation: f64 },

    #[error("point outside the domain of the smooth loss")]
    Domain,

    #[error("step-size search exceeded {0} shrink steps")]
    StepSize(usize),

    #[error("reduced Hessian is not symmetric (asymmetry {0:.3e})")]
    NonSymmetric(f64),

    #[error("not enough Newton tail points for an order fit (found {0}, need 3)")]
    InsufficientTail(usize),

    #[error("candidate is not stationary: -grad f violates the conjugate domain by {0:.3e}")]
    NotStationary(f64),

    #[error("no convergence within {0} iterations")]
    NoConvergence(usize),

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
