//! Intensity models, Poisson-process simulation and thinning.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::domain::{Domain, FeatureMap, Location};
use crate::error::DataError;
use crate::rng::rng_from_seed;

/// Nodes in the probe grid used for `Λ(D)` and the rejection envelope.
pub const PROBE_NODES: usize = 10_000;
/// Envelope inflation over the probe-grid maximum.
pub const ENVELOPE_FACTOR: f64 = 1.2;

/// One term `exp(log_weight + alpha + beta'x)` of an intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(default)]
    pub log_weight: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityKind {
    LogLinear,
    Mixture,
}

/// `λ(x) = Σ_k exp(log_weight_k + alpha_k + beta_k'x)`; one component is the
/// log-linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntensitySpec", into = "IntensitySpec")]
pub struct IntensityModel {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct IntensitySpec {
    components: Vec<Component>,
}

impl TryFrom<IntensitySpec> for IntensityModel {
    type Error = DataError;
    fn try_from(s: IntensitySpec) -> Result<Self, DataError> {
        IntensityModel::mixture(s.components)
    }
}

impl From<IntensityModel> for IntensitySpec {
    fn from(m: IntensityModel) -> Self {
        IntensitySpec {
            components: m.components,
        }
    }
}

impl IntensityModel {
    pub fn log_linear(alpha: f64, beta: Vec<f64>) -> Self {
        Self {
            components: vec![Component {
                log_weight: 0.0,
                alpha,
                beta,
            }],
        }
    }

    pub fn mixture(components: Vec<Component>) -> Result<Self, DataError> {
        let Some(first) = components.first() else {
            return Err(DataError::InvalidModel("intensity needs at least one component".into()));
        };
        let p = first.beta.len();
        for c in &components {
            if c.beta.len() != p {
                return Err(DataError::InvalidModel(
                    "components have differing feature dimensions".into(),
                ));
            }
            if !(c.alpha.is_finite()
                && c.log_weight.is_finite()
                && c.beta.iter().all(|b| b.is_finite()))
            {
                return Err(DataError::InvalidModel("non-finite intensity parameter".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn kind(&self) -> IntensityKind {
        if self.components.len() == 1 {
            IntensityKind::LogLinear
        } else {
            IntensityKind::Mixture
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].beta.len()
    }

    pub fn log_intensity(&self, x: &[f64]) -> f64 {
        let terms = self.components.iter().map(|c| {
            c.log_weight + c.alpha + c.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
        });
        log_sum_exp(terms)
    }

    pub fn intensity(&self, x: &[f64]) -> f64 {
        self.log_intensity(x).exp()
    }
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Intensity evaluated on the probe grid: `(Λ(D) by the midpoint rule, max λ)`.
fn probe<F: FeatureMap + ?Sized>(
    model: &IntensityModel,
    domain: &Domain,
    feature_map: &F,
) -> Result<(f64, f64), DataError> {
    let d = domain.dim();
    let per_axis = (PROBE_NODES as f64).powf(1.0 / d as f64).ceil() as usize;
    let nodes = domain.grid_centers(per_axis);
    let cell = domain.area() / nodes.len() as f64;
    let mut total = 0.0;
    let mut max = 0.0_f64;
    for z in &nodes {
        let lam = model.intensity(&feature_map.features(z));
        if !lam.is_finite() {
            return Err(DataError::InvalidModel(format!(
                "intensity is not finite at probe node {z:?}"
            )));
        }
        total += lam * cell;
        max = max.max(lam);
    }
    Ok((total, max))
}

/// `Λ(D)` by the midpoint rule on the probe grid.
pub fn integrated_intensity<F: FeatureMap + ?Sized>(
    model: &IntensityModel,
    domain: &Domain,
    feature_map: &F,
) -> Result<f64, DataError> {
    probe(model, domain, feature_map).map(|(total, _)| total)
}

/// Draws a realisation of the Poisson process with intensity `model` on `domain`:
/// a Poisson(`Λ(D)`) count, then that many locations from `λ / Λ(D)` by
/// rejection against a uniform envelope.
pub fn simulate_ipp<F: FeatureMap + ?Sized>(
    model: &IntensityModel,
    domain: &Domain,
    feature_map: &F,
    seed: u64,
) -> Result<Vec<Location>, DataError> {
    let (total, max) = probe(model, domain, feature_map)?;
    let mut rng = rng_from_seed(seed);
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(total)
        .map_err(|e| DataError::InvalidModel(format!("Λ(D) = {total}: {e}")))?
        .sample(&mut rng) as usize;

    let envelope = ENVELOPE_FACTOR * max;
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let z = domain.uniform_point(&mut rng);
        let lam = model.intensity(&feature_map.features(&z));
        if !lam.is_finite() || lam > envelope {
            return Err(DataError::InvalidModel(format!(
                "intensity {lam} at {z:?} exceeds the rejection envelope {envelope}"
            )));
        }
        if rng.random::<f64>() * envelope < lam {
            points.push(z);
        }
    }
    Ok(points)
}

/// Occurrence intensity on features `x1` thinned by detection `s = exp(γ + δ'x2)`.
/// Index sets refer to positions in the full feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThinningSpec", into = "ThinningSpec")]
pub struct ThinningModel {
    occurrence: IntensityModel,
    occurrence_features: Vec<usize>,
    gamma: f64,
    delta: Vec<f64>,
    detection_features: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ThinningSpec {
    occurrence: IntensityModel,
    occurrence_features: Vec<usize>,
    gamma: f64,
    delta: Vec<f64>,
    detection_features: Vec<usize>,
}

impl TryFrom<ThinningSpec> for ThinningModel {
    type Error = DataError;
    fn try_from(s: ThinningSpec) -> Result<Self, DataError> {
        ThinningModel::new(
            s.occurrence,
            s.occurrence_features,
            s.gamma,
            s.delta,
            s.detection_features,
        )
    }
}

impl From<ThinningModel> for ThinningSpec {
    fn from(m: ThinningModel) -> Self {
        ThinningSpec {
            occurrence: m.occurrence,
            occurrence_features: m.occurrence_features,
            gamma: m.gamma,
            delta: m.delta,
            detection_features: m.detection_features,
        }
    }
}

impl ThinningModel {
    pub fn new(
        occurrence: IntensityModel,
        occurrence_features: Vec<usize>,
        gamma: f64,
        delta: Vec<f64>,
        detection_features: Vec<usize>,
    ) -> Result<Self, DataError> {
        if occurrence.dim() != occurrence_features.len() {
            return Err(DataError::InvalidModel(
                "occurrence slopes do not match occurrence feature indices".into(),
            ));
        }
        if delta.len() != detection_features.len() {
            return Err(DataError::InvalidModel(
                "detection slopes do not match detection feature indices".into(),
            ));
        }
        if occurrence_features
            .iter()
            .any(|i| detection_features.contains(i))
        {
            return Err(DataError::InvalidModel(
                "occurrence and detection feature sets must be disjoint".into(),
            ));
        }
        if !(gamma.is_finite() && delta.iter().all(|d| d.is_finite())) {
            return Err(DataError::InvalidModel("non-finite detection parameter".into()));
        }
        Ok(Self {
            occurrence,
            occurrence_features,
            gamma,
            delta,
            detection_features,
        })
    }

    /// Detection that keeps every point with probability `prob`.
    pub fn constant(occurrence: IntensityModel, occurrence_features: Vec<usize>, prob: f64) -> Result<Self, DataError> {
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(DataError::InvalidModel(format!("detection probability {prob} not in (0, 1]")));
        }
        Self::new(occurrence, occurrence_features, prob.ln(), Vec::new(), Vec::new())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn occurrence(&self) -> &IntensityModel {
        &self.occurrence
    }

    pub fn occurrence_features(&self) -> &[usize] {
        &self.occurrence_features
    }

    pub fn detection_features(&self) -> &[usize] {
        &self.detection_features
    }

    /// `s(x) = exp(γ + δ'x2)`.
    pub fn detection_probability(&self, x: &[f64]) -> f64 {
        let lin: f64 = self
            .detection_features
            .iter()
            .zip(&self.delta)
            .map(|(&j, d)| d * x[j])
            .sum();
        (self.gamma + lin).exp()
    }

    /// The occurrence intensity written over the full feature vector of length `p`.
    pub fn occurrence_over(&self, p: usize) -> Result<IntensityModel, DataError> {
        self.embed(p, &self.occurrence, 0.0, &[])
    }

    /// The observed (sightings) intensity `λ̃·s` over the full feature vector.
    pub fn sightings_over(&self, p: usize) -> Result<IntensityModel, DataError> {
        self.embed(p, &self.occurrence, self.gamma, &self.delta)
    }

    fn embed(
        &self,
        p: usize,
        occ: &IntensityModel,
        gamma: f64,
        delta: &[f64],
    ) -> Result<IntensityModel, DataError> {
        let max_idx = self
            .occurrence_features
            .iter()
            .chain(&self.detection_features)
            .copied()
            .max();
        if max_idx.is_some_and(|m| m >= p) {
            return Err(DataError::InvalidModel(format!(
                "feature index out of range for {p} features"
            )));
        }
        let comps = occ
            .components()
            .iter()
            .map(|c| {
                let mut beta = vec![0.0; p];
                for (&j, &b) in self.occurrence_features.iter().zip(&c.beta) {
                    beta[j] = b;
                }
                for (&j, &d) in self.detection_features.iter().zip(delta) {
                    beta[j] = d;
                }
                Component {
                    log_weight: c.log_weight,
                    alpha: c.alpha + gamma,
                    beta,
                }
            })
            .collect();
        IntensityModel::mixture(comps)
    }
}

/// Keeps each point independently with probability `s(x(z))`, preserving order.
pub fn thin_process<F: FeatureMap + ?Sized>(
    points: &[Location],
    model: &ThinningModel,
    feature_map: &F,
    seed: u64,
) -> Result<Vec<Location>, DataError> {
    let mut rng = rng_from_seed(seed);
    let mut kept = Vec::new();
    for z in points {
        let s = model.detection_probability(&feature_map.features(z));
        if !(0.0..=1.0).contains(&s) {
            return Err(DataError::InvalidModel(format!(
                "detection probability {s} at {z:?} outside [0, 1]"
            )));
        }
        let u: f64 = rng.random();
        if u < s {
            kept.push(z.clone());
        }
    }
    Ok(kept)
}
