use serde::{Deserialize, Serialize};

use crate::error::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    #[default]
    None,
    L1,
    L2,
    Elastic,
}

/// Convex penalty on the slopes; the intercept is never penalized.
///
/// `J(β) = λ Σ_j r_j [ a |β_j| + (1 − a) β_j² / 2 ]` with `a = 1` for L1,
/// `a = 0` for L2 and `a = mix` for the elastic net. Coefficients are the
/// standardized ones the solvers work with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
    /// Per-coefficient factors `r_j`; `None` means all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub mix: f64,
}

impl Penalty {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn l1(lambda: f64) -> Self {
        Self {
            kind: PenaltyKind::L1,
            lambda,
            weights: None,
            mix: 1.0,
        }
    }

    pub fn l2(lambda: f64) -> Self {
        Self {
            kind: PenaltyKind::L2,
            lambda,
            weights: None,
            mix: 0.0,
        }
    }

    pub fn elastic(lambda: f64, mix: f64) -> Self {
        Self {
            kind: PenaltyKind::Elastic,
            lambda,
            weights: None,
            mix,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn validate(&self, p: usize) -> Result<(), SolveError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(SolveError::InvalidArgument(format!(
                "penalty lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.kind == PenaltyKind::Elastic && !(0.0..=1.0).contains(&self.mix) {
            return Err(SolveError::InvalidArgument(format!(
                "elastic-net mix must be in [0, 1], got {}",
                self.mix
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != p {
                return Err(SolveError::InvalidArgument(format!(
                    "{} penalty weights for {p} coefficients",
                    w.len()
                )));
            }
            if w.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(SolveError::InvalidArgument(
                    "penalty weights must be finite and >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    fn l1_share(&self) -> f64 {
        match self.kind {
            PenaltyKind::None | PenaltyKind::L2 => 0.0,
            PenaltyKind::L1 => 1.0,
            PenaltyKind::Elastic => self.mix,
        }
    }

    fn factor(&self, j: usize) -> f64 {
        if self.kind == PenaltyKind::None {
            return 0.0;
        }
        self.lambda * self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    /// Coefficient of `|β_j|`.
    pub fn l1_coef(&self, j: usize) -> f64 {
        self.factor(j) * self.l1_share()
    }

    /// Coefficient of `β_j² / 2`.
    pub fn l2_coef(&self, j: usize) -> f64 {
        self.factor(j) * (1.0 - self.l1_share())
    }

    pub fn has_l1(&self) -> bool {
        self.kind != PenaltyKind::None && self.l1_share() > 0.0 && self.lambda > 0.0
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .enumerate()
            .map(|(j, b)| self.l1_coef(j) * b.abs() + 0.5 * self.l2_coef(j) * b * b)
            .sum()
    }
}

impl std::fmt::Display for Penalty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            PenaltyKind::None => write!(f, "none"),
            PenaltyKind::L1 => write!(f, "l1(lambda={})", self.lambda),
            PenaltyKind::L2 => write!(f, "l2(lambda={})", self.lambda),
            PenaltyKind::Elastic => write!(f, "elastic(lambda={}, mix={})", self.lambda, self.mix),
        }
    }
}
