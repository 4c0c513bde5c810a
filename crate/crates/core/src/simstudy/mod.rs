//! The one-dimensional misspecification study: presence drawn from a
//! two-subspecies mixture, background standard normal, comparing unweighted
//! and infinitely weighted logistic regression slopes.

mod quadrature;
mod sweep;

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, LikelihoodError};
use crate::likelihoods::{sigmoid, softplus, ObjectiveEval};
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers::{newton_solve, Layout, OptimOptions, Penalty};

pub use quadrature::integrate;
pub use sweep::{
    emit_figure_data, read_figure_data, run_sweep, Estimator, FigureRow, SweepCell, SweepConfig, SweepResult,
};

/// Integration range for population expectations.
pub const QUAD_RANGE: (f64, f64) = (-10.0, 10.0);
pub const QUAD_TOL: f64 = 1e-10;

/// How the mixture's component proportions are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureForm {
    /// `p1 = Σ π_k N(m_k, 1)`; presence proportions are the `π_k`.
    PopulationProportion,
    /// `λ(x) ∝ Σ π_k e^{m_k x}` relative to the standard normal background,
    /// so `p1 = Σ π_k e^{m_k²/2} N(m_k, 1) / Σ π_k e^{m_k²/2}`.
    UnnormalizedIntensity,
}

/// Named presence laws used by the sweep configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecVariant {
    /// 0.95 N(1.5, 1) + 0.05 N(−2, 1).
    #[default]
    Canonical,
    /// Same components read as an unnormalized intensity.
    Alternate,
    /// N(μ1, 1) with the canonical μ1: the logistic model is then correct.
    Correct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec1D {
    pub proportions: Vec<f64>,
    /// Component means, equal to the component intensity slopes.
    pub means: Vec<f64>,
    pub form: MixtureForm,
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl MixtureSpec1D {
    pub fn new(proportions: Vec<f64>, means: Vec<f64>, form: MixtureForm) -> Result<Self, Error> {
        if proportions.is_empty() || proportions.len() != means.len() {
            return Err(Error::Precondition(format!(
                "{} proportions for {} means",
                proportions.len(),
                means.len()
            )));
        }
        if proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Precondition("proportions and means must be finite, proportions >= 0".into()));
        }
        let total: f64 = proportions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!("proportions sum to {total}, not 1")));
        }
        Ok(Self { proportions, means, form })
    }

    pub fn canonical() -> Self {
        Self::new(vec![0.95, 0.05], vec![1.5, -2.0], MixtureForm::PopulationProportion).expect("valid")
    }

    pub fn alternate() -> Self {
        Self::new(vec![0.95, 0.05], vec![1.5, -2.0], MixtureForm::UnnormalizedIntensity).expect("valid")
    }

    /// A single unit-variance normal presence law with mean `slope`.
    pub fn single(slope: f64) -> Self {
        Self::new(vec![1.0], vec![slope], MixtureForm::PopulationProportion).expect("valid")
    }

    pub fn variant(v: SpecVariant) -> Self {
        match v {
            SpecVariant::Canonical => Self::canonical(),
            SpecVariant::Alternate => Self::alternate(),
            SpecVariant::Correct => Self::single(Self::canonical().mu1()),
        }
    }

    /// Presence-law weights of the components.
    pub fn component_weights(&self) -> Vec<f64> {
        match self.form {
            MixtureForm::PopulationProportion => self.proportions.clone(),
            MixtureForm::UnnormalizedIntensity => {
                let raw: Vec<f64> = self
                    .proportions
                    .iter()
                    .zip(&self.means)
                    .map(|(p, m)| p * (0.5 * m * m).exp())
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|r| r / total).collect()
            }
        }
    }

    /// `E_{p1}(x)` in closed form.
    pub fn mu1(&self) -> f64 {
        // fused accumulation: the canonical spec gives exactly 1.325
        self.component_weights()
            .iter()
            .zip(&self.means)
            .rev()
            .fold(0.0, |acc, (w, m)| w.mul_add(*m, acc))
    }

    pub fn presence_density(&self, x: f64) -> f64 {
        self.component_weights()
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * std_normal_pdf(x - m))
            .sum()
    }

    pub fn background_density(&self, x: f64) -> f64 {
        std_normal_pdf(x)
    }

    fn draw_presence_one<R: Rng>(&self, weights: &[f64], rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[k] + z
    }
}

/// `n` i.i.d. presence features.
pub fn draw_presence(spec: &MixtureSpec1D, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let weights = spec.component_weights();
    (0..n).map(|_| spec.draw_presence_one(&weights, &mut rng)).collect()
}

/// `n` i.i.d. standard normal background features.
pub fn draw_background(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Presence-first dataset with one feature and unit domain area.
pub fn study_dataset(presence: &[f64], background: &[f64]) -> Result<Dataset, Error> {
    let labels: Vec<bool> = std::iter::repeat_n(true, presence.len())
        .chain(std::iter::repeat_n(false, background.len()))
        .collect();
    let x = DMatrix::from_iterator(labels.len(), 1, presence.iter().chain(background).copied());
    Ok(Dataset::new(labels, x, 1.0, None)?)
}

/// Presence from sub-seed 0, background from sub-seed 1 of `seed`.
pub fn draw_study_data(spec: &MixtureSpec1D, n1: usize, n0: usize, seed: u64) -> Result<Dataset, Error> {
    let presence = draw_presence(spec, n1, derive_seed(seed, &[0]));
    let background = draw_background(n0, derive_seed(seed, &[1]));
    study_dataset(&presence, &background)
}

/// Population logistic-regression coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationLimit {
    /// `−∞` in the `ratio → 0` limit.
    pub eta: f64,
    pub beta: f64,
}

/// Limit of the unweighted logistic-regression fit when presence and
/// background samples grow with `n1 / n0 → ratio`. `ratio = 0` is the
/// infinitely weighted limit, where the slope is `μ1` (the background being
/// standard normal).
pub fn population_lr_limit(spec: &MixtureSpec1D, ratio: f64) -> Result<PopulationLimit, Error> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::Precondition(format!("ratio must be finite and >= 0, got {ratio}")));
    }
    if ratio == 0.0 {
        return Ok(PopulationLimit {
            eta: f64::NEG_INFINITY,
            beta: spec.mu1(),
        });
    }
    let q = ratio / (1.0 + ratio);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let objective = |t: &DVector<f64>| -> Result<ObjectiveEval, LikelihoodError> {
        let (eta, beta) = (t[0], t[1]);
        let r = integrate(
            |x| {
                let s = eta + beta * x;
                let p1 = q * spec.presence_density(x);
                let p0 = (1.0 - q) * spec.background_density(x);
                let sig = sigmoid(s);
                let score = p1 * (1.0 - sig) - p0 * sig;
                let curv = (p1 + p0) * sig * (1.0 - sig);
                [
                    -p1 * softplus(-s) - p0 * softplus(s),
                    score,
                    score * x,
                    curv,
                    curv * x,
                    curv * x * x,
                ]
            },
            QUAD_RANGE.0,
            QUAD_RANGE.1,
            QUAD_TOL,
        );
        match r {
            Ok([v, g0, g1, h00, h01, h11]) => Ok(ObjectiveEval {
                value: v,
                gradient: DVector::from_vec(vec![g0, g1]),
                hessian: DMatrix::from_row_slice(2, 2, &[-h00, -h01, -h01, -h11]),
            }),
            Err(e) => {
                let msg = e.to_string();
                failure.borrow_mut().get_or_insert(e);
                Err(LikelihoodError::InvalidParameter(msg))
            }
        }
    };
    let start = DVector::from_vec(vec![(q / (1.0 - q)).ln(), 0.0]);
    let layout = Layout {
        first_penalized: 1,
        residual_scale: 1.0,
    };
    let result = newton_solve(objective, start, &Penalty::none(), layout, &OptimOptions::default());
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let r = result?;
    Ok(PopulationLimit {
        eta: r.params[0],
        beta: r.params[1],
    })
}
