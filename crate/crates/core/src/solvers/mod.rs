//! Maximizers for each likelihood, sharing one Newton engine.
//!
//! Features are centred and scaled by their background moments before
//! fitting; coefficients are reported on the original scale. Penalties act
//! on the standardized coefficients.

mod fit;
mod newton;
mod penalty;

pub use fit::{
    feature_scaling, fit_ipp, fit_iwlr, fit_logistic, fit_maxent, fit_poisson_llm, fit_poisson_llm_on_grid,
    intercept_offset, normalizing_intercept, ModelFit, ModelKind,
};
pub use newton::{newton_solve, Layout, NewtonResult, OptimOptions};
pub use penalty::{Penalty, PenaltyKind};
