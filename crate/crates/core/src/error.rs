use thiserror::Error;

/// Errors raised by the solvers, predictors and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Regularization weights are both zero with fewer users than antennas,
    /// so the scalar max-min problem has its maximum at beta = 0.
    #[error(
        "degenerate saddle: lambda1 = lambda2 = 0 requires delta >= 1 \
         (admissibility assumption violated, delta = {delta})"
    )]
    DegenerateSaddle { delta: f64 },

    #[error("receive scaling undefined: {0}")]
    ScalingUndefined(String),

    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
