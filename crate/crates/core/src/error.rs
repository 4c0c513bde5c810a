//! Error types shared across the crate.

use thiserror::Error;

/// Problems with inputs to the data layer: bad arguments, invalid models, malformed files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raised while evaluating a log-likelihood.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LikelihoodError {
    /// `exp(u)` would exceed the overflow guard at this row.
    #[error("infeasible point: exponent {exponent} at row {row} exceeds the overflow guard")]
    Infeasible { row: usize, exponent: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Failures of the optimizers.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (optimality residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    /// Coefficients escape along a direction of unbounded ascent (separation).
    #[error("divergence along direction {direction:?} after {iterations} iterations")]
    Divergence {
        direction: Vec<f64>,
        iterations: usize,
    },
    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),
    #[error("weight escalation did not settle after {rounds} rounds (W = {weight:e})")]
    WeightEscalation { rounds: usize, weight: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

/// Top-level error for the composite operations (checks, studies).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solve(_) | Error::Likelihood(_) | Error::Quadrature(_)
        )
    }
}
