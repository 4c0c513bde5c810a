//! Machine-checkable forms of the estimator equivalences and score identities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Error;
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers::{
    feature_scaling, fit_ipp, fit_iwlr, fit_logistic, fit_maxent, ModelFit, ModelKind, OptimOptions, Penalty,
};

/// Tolerance for identities that hold exactly up to roundoff.
pub const EXACT_TOL: f64 = 1e-8;
/// Tolerance for identities that hold in the limit of infinite background weight.
pub const LIMIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub check: String,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: Option<u64>,
    pub penalty: String,
    /// Check-specific diagnostics (component differences, weights used).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<(String, f64)>,
}

impl EquivalenceReport {
    fn new(check: &str, max_abs_diff: f64, tolerance: f64, penalty: &Penalty) -> Self {
        Self {
            check: check.to_string(),
            max_abs_diff,
            tolerance,
            // NaN never passes
            pass: max_abs_diff <= tolerance,
            seed: None,
            penalty: penalty.to_string(),
            details: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Re-judges the report against a different tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.max_abs_diff <= tolerance;
        self
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.push((key.to_string(), value));
        self
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Fits ipp and maxent and compares their slopes.
pub fn check_prop1(data: &Dataset, penalty: &Penalty, opts: &OptimOptions) -> Result<EquivalenceReport, Error> {
    let ipp = fit_ipp(data, penalty, opts)?;
    let me = fit_maxent(data, penalty, opts)?;
    let diff = max_abs_diff(&ipp.beta, &me.beta);
    Ok(EquivalenceReport::new("maxent_vs_ipp", diff, EXACT_TOL, penalty))
}

/// Fits weighted logistic regression and ipp and compares slopes and the
/// implied intercept. `weight = None` runs the escalating IWLR fit; a fixed
/// weight shows the finite-W gap.
pub fn check_prop2(
    data: &Dataset,
    penalty: &Penalty,
    weight: Option<f64>,
    opts: &OptimOptions,
) -> Result<EquivalenceReport, Error> {
    let ipp = fit_ipp(data, penalty, opts)?;
    let lr = match weight {
        Some(w) => fit_logistic(data, w, penalty, opts)?,
        None => fit_iwlr(data, penalty, opts)?,
    };
    let beta_diff = max_abs_diff(&ipp.beta, &lr.beta);
    let alpha_diff = (ipp.alpha.unwrap_or(f64::NAN) - lr.alpha.unwrap_or(f64::NAN)).abs();
    let mut report = EquivalenceReport::new("iwlr_vs_ipp", beta_diff.max(alpha_diff), LIMIT_TOL, penalty)
        .detail("beta_diff", beta_diff)
        .detail("alpha_diff", alpha_diff)
        .detail("W", lr.weight.unwrap_or(f64::NAN));
    if let Some(r) = lr.w_rounds {
        report = report.detail("w_rounds", r as f64);
    }
    Ok(report)
}

/// Residuals of the score equations of an IPP-type fit (ipp, maxent, or the
/// implied intensity of a logistic fit):
///
/// * normalization `Σ_{y=0} w_i λ̂(x_i) = n1`, relative to `n1`;
/// * moment matching `Σ_{y=1} x_ij − Σ_{y=0} w_i λ̂(x_i) x_ij` equal to the
///   penalty subgradient (zero when unpenalized), relative to the total
///   absolute mass of the two sums.
///
/// The report's `max_abs_diff` is the larger of the two.
pub fn check_scores(fit: &ModelFit, data: &Dataset, penalty: &Penalty) -> Result<EquivalenceReport, Error> {
    let alpha = fit
        .alpha
        .ok_or_else(|| Error::Precondition(format!("{} fit carries no intercept", fit.model.name())))?;
    if fit.beta.len() != data.dim() {
        return Err(Error::Precondition(format!(
            "fit has {} slopes, data has {} features",
            fit.beta.len(),
            data.dim()
        )));
    }
    let x = data.features();
    let p = data.dim();
    let eta = |i: usize| alpha + (0..p).map(|j| fit.beta[j] * x[(i, j)]).sum::<f64>();

    let mass: f64 = data.background_rows().map(|i| data.row_weight(i) * eta(i).exp()).sum();
    let n1 = data.n1() as f64;
    let normalization = (mass - n1).abs() / n1;

    let penalized = penalty.lambda > 0.0 && penalty.kind != crate::solvers::PenaltyKind::None;
    let scale = if penalized {
        Some(feature_scaling(data)?.1)
    } else {
        None
    };

    let mut moment: f64 = 0.0;
    for j in 0..p {
        let pres: f64 = data.presence_rows().map(|i| x[(i, j)]).sum();
        let pres_abs: f64 = data.presence_rows().map(|i| x[(i, j)].abs()).sum();
        let (bg, bg_abs) = data.background_rows().fold((0.0, 0.0), |(s, a), i| {
            let m = data.row_weight(i) * eta(i).exp();
            (s + m * x[(i, j)], a + m * x[(i, j)].abs())
        });
        let residual = pres - bg;
        // KKT on the standardized scale: residual = s_j ∂J(β_j s_j)
        let excess = match &scale {
            None => residual.abs(),
            Some(sd) => {
                let s = sd[j];
                let b = fit.beta[j] * s;
                let smooth = penalty.l2_coef(j) * b;
                let l1 = penalty.l1_coef(j);
                let target = residual / s - smooth;
                if b != 0.0 {
                    (target - l1 * b.signum()).abs() * s
                } else {
                    (target.abs() - l1).max(0.0) * s
                }
            }
        };
        let denom = (pres_abs + bg_abs).max(f64::MIN_POSITIVE);
        moment = moment.max(excess / denom);
    }

    Ok(EquivalenceReport::new("score_identities", normalization.max(moment), EXACT_TOL, penalty)
        .detail("normalization", normalization)
        .detail("moment", moment))
}

/// Simulation truth behind a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownTruth {
    pub alpha: f64,
    /// `Λ(D)`, the integrated true intensity.
    pub integrated_intensity: f64,
    /// False when the fitted model family does not contain the truth.
    pub correctly_specified: bool,
}

/// Target intercept of a logistic fit with background weight `W`:
/// `α + log(n1 / Λ(D)) − log(W n0 / |D|)`.
pub fn eta_target(truth: &KnownTruth, data: &Dataset, weight: f64) -> f64 {
    truth.alpha + (data.n1() as f64 / truth.integrated_intensity).ln()
        - (weight * data.n0() as f64 / data.domain_area()).ln()
}

/// Compares a logistic fit's intercept with the value implied by the
/// simulation truth. Only meaningful for correctly specified data.
pub fn check_eta_relation(
    fit: &ModelFit,
    data: &Dataset,
    truth: &KnownTruth,
    tolerance: f64,
) -> Result<EquivalenceReport, Error> {
    if !truth.correctly_specified {
        return Err(Error::Precondition(
            "the intercept relation only holds for correctly specified data".into(),
        ));
    }
    if !matches!(fit.model, ModelKind::Logistic | ModelKind::Iwlr) {
        return Err(Error::Precondition(format!("{} is not a logistic fit", fit.model.name())));
    }
    let eta = fit
        .eta
        .ok_or_else(|| Error::Precondition("logistic fit without intercept".into()))?;
    let weight = fit.weight.unwrap_or(1.0);
    let target = eta_target(truth, data, weight);
    Ok(EquivalenceReport::new("eta_relation", (eta - target).abs(), tolerance, &Penalty::none())
        .detail("eta_hat", eta)
        .detail("eta_target", target))
}

pub const STANDARD_SWEEP_SIZE: usize = 50;

/// Penalties of the standard sweep.
pub fn standard_penalties() -> Vec<Penalty> {
    vec![Penalty::none(), Penalty::l2(0.3), Penalty::l1(0.1)]
}

/// Random dataset `index` of the standard sweep: 1 to 5 features, standard
/// normal background, presence shifted by up to 0.5 per feature, random
/// domain area, and quadrature weights on every third dataset.
pub fn standard_dataset(seed: u64, index: u64) -> Dataset {
    let mut rng = rng_from_seed(derive_seed(seed, &[index]));
    let p: usize = rng.random_range(1..=5);
    let n1: usize = rng.random_range(5..=200);
    // enough background that the presence mean sits well inside its hull
    let lo = ((50 * p) as f64).ln();
    let n0 = rng.random_range(lo..2000f64.ln()).exp().round() as usize;
    let area: f64 = rng.random_range(0.0f64..5.0).exp();
    let shift: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();

    let mut rows = Vec::with_capacity(n1 + n0);
    let mut labels = Vec::with_capacity(n1 + n0);
    for (k, count) in [(true, n1), (false, n0)] {
        for _ in 0..count {
            let row: Vec<f64> = (0..p)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if k {
                        z + shift[j]
                    } else {
                        z
                    }
                })
                .collect();
            rows.push(row);
            labels.push(k);
        }
    }
    let weights = (index % 3 == 2).then(|| {
        let raw: Vec<f64> = (0..n0).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w * area / total).collect()
    });
    Dataset::from_rows(labels, &rows, area, weights).expect("generated dataset is valid")
}

/// Runs both equivalence checks on every standard dataset and penalty.
/// Reports come back in (dataset, penalty, check) order.
pub fn run_standard_sweep(seed: u64, opts: &OptimOptions) -> Vec<Result<EquivalenceReport, Error>> {
    let penalties = standard_penalties();
    let cells: Vec<(u64, usize)> = (0..STANDARD_SWEEP_SIZE as u64)
        .flat_map(|d| (0..penalties.len()).map(move |k| (d, k)))
        .collect();
    cells
        .par_iter()
        .flat_map_iter(|&(d, k)| {
            let data = standard_dataset(seed, d);
            let pen = &penalties[k];
            let data_seed = derive_seed(seed, &[d]);
            [
                check_prop1(&data, pen, opts).map(|r| r.with_seed(data_seed)),
                check_prop2(&data, pen, None, opts).map(|r| r.with_seed(data_seed)),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::SolveError;

    fn opts() -> OptimOptions {
        OptimOptions::default()
    }

    #[test]
    fn report_pass_flag() {
        let r = EquivalenceReport::new("x", 1e-9, 1e-8, &Penalty::none());
        assert!(r.pass);
        assert!(!r.clone().with_tolerance(1e-10).pass);
        assert!(!EquivalenceReport::new("x", f64::NAN, 1.0, &Penalty::none()).pass);
        let line = r.to_json_line();
        assert!(!line.contains('\n'));
        let back: EquivalenceReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn prop1_passes_with_and_without_l2() {
        let data = standard_dataset(5, 0);
        assert!(check_prop1(&data, &Penalty::none(), &opts()).unwrap().pass);
        assert!(check_prop1(&data, &Penalty::l2(1.0), &opts()).unwrap().pass);
    }

    #[test]
    fn prop1_surfaces_rank_deficiency() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1, 2.0]).collect();
        let labels = (0..30).map(|i| i % 3 == 0).collect();
        let d = Dataset::from_rows(labels, &rows, 1.0, None).unwrap();
        let e = check_prop1(&d, &Penalty::none(), &opts()).unwrap_err();
        assert!(matches!(e, Error::Solve(SolveError::RankDeficient(_))), "{e}");
    }

    #[test]
    fn prop2_small_weight_fails_large_passes() {
        let data = standard_dataset(5, 1);
        let small = check_prop2(&data, &Penalty::none(), Some(10.0), &opts()).unwrap();
        assert!(!small.pass, "{small:?}");
        let big = check_prop2(&data, &Penalty::none(), Some(1e12), &opts()).unwrap();
        assert!(big.pass, "{big:?}");
        let auto = check_prop2(&data, &Penalty::none(), None, &opts()).unwrap();
        assert!(auto.pass, "{auto:?}");
    }

    #[test]
    fn scores_hold_and_perturbation_fails() {
        let data = standard_dataset(9, 2);
        let fit = fit_ipp(&data, &Penalty::none(), &opts()).unwrap();
        let r = check_scores(&fit, &data, &Penalty::none()).unwrap();
        assert!(r.pass, "{r:?}");
        let mut bad = fit.clone();
        bad.beta[0] += 0.1;
        assert!(!check_scores(&bad, &data, &Penalty::none()).unwrap().pass);
    }

    #[test]
    fn l1_scores_match_subgradient() {
        let data = standard_dataset(9, 3);
        for pen in [Penalty::l1(0.5), Penalty::l1(50.0), Penalty::elastic(2.0, 0.5)] {
            let fit = fit_ipp(&data, &pen, &opts()).unwrap();
            let r = check_scores(&fit, &data, &pen).unwrap();
            assert!(r.pass, "{pen}: {r:?}");
            // ignoring the penalty the moment condition is visibly violated
            let plain = check_scores(&fit, &data, &Penalty::none()).unwrap();
            assert!(plain.details[0].1 < EXACT_TOL);
            assert!(!plain.pass);
        }
    }

    #[test]
    fn eta_relation_refuses_misspecified() {
        let data = standard_dataset(1, 0);
        let fit = fit_logistic(&data, 1.0, &Penalty::none(), &opts()).unwrap();
        let truth = KnownTruth {
            alpha: 0.0,
            integrated_intensity: 1.0,
            correctly_specified: false,
        };
        assert!(matches!(
            check_eta_relation(&fit, &data, &truth, 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn eta_target_weight_mapping() {
        let data = standard_dataset(1, 0);
        let truth = KnownTruth {
            alpha: 0.3,
            integrated_intensity: 40.0,
            correctly_specified: true,
        };
        let w1 = eta_target(&truth, &data, 1.0);
        let w100 = eta_target(&truth, &data, 100.0);
        assert!((w1 - w100 - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn standard_datasets_are_deterministic() {
        let a = standard_dataset(3, 7);
        let b = standard_dataset(3, 7);
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.row_weights(), b.row_weights());
    }
}
