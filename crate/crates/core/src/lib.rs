//! Presence-only species distribution estimators.
//!
//! Fits the log-linear inhomogeneous Poisson process (IPP) to presence and
//! background samples by several routes that agree on the slope estimate:
//! direct numerical maximum likelihood, the Maxent conditional likelihood,
//! a binned Poisson log-linear model, and logistic regression with a very
//! large background weight. Also generates synthetic data and runs the
//! misspecification study comparing weighted and unweighted logistic fits.

pub mod data;
pub mod equivalence;
pub mod error;
pub mod likelihoods;
pub mod rng;
pub mod simstudy;
pub mod solvers;

pub use error::{DataError, Error, LikelihoodError, SolveError};

/// Version string embedded in output artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
