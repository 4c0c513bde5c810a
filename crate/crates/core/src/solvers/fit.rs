use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::newton::{check_rank, newton_solve, Layout, NewtonResult, OptimOptions};
use super::penalty::Penalty;
use crate::data::{Dataset, Domain, FeatureMap, Location};
use crate::error::SolveError;
use crate::likelihoods::{
    bin_presence, ipp_loglik, logistic_loglik, maxent_loglik, poisson_llm_loglik, sigmoid,
    BinnedCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ipp,
    Maxent,
    Logistic,
    Iwlr,
    PoissonLlm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ipp => "ipp",
            ModelKind::Maxent => "maxent",
            ModelKind::Logistic => "logistic",
            ModelKind::Iwlr => "iwlr",
            ModelKind::PoissonLlm => "poisson_llm",
        }
    }
}

/// A fitted model on the original feature scale.
///
/// `grad_norm` is the optimality residual divided by `max(1, n1)`, the scale
/// of the score sums; for L1 fits it is the minimum-norm subgradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: ModelKind,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub beta: Vec<f64>,
    #[serde(rename = "W")]
    pub weight: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub n1: usize,
    pub n0: usize,
    pub domain_area: f64,
    pub seed: Option<u64>,
    /// Escalation rounds taken by the weighted logistic fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_rounds: Option<usize>,
    /// Largest fitted probability of a logistic fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_fitted: Option<f64>,
    /// Per-row fitted intensity (Poisson-type models) or probability (logistic).
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

impl ModelFit {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Centring and scaling of features by their background moments.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn from_rows(x: &DMatrix<f64>, rows: impl Iterator<Item = usize> + Clone) -> Result<Self, SolveError> {
        let n = rows.clone().count() as f64;
        let p = x.ncols();
        let mut center = vec![0.0; p];
        let mut scale = vec![0.0; p];
        for j in 0..p {
            let mean = rows.clone().map(|i| x[(i, j)]).sum::<f64>() / n;
            let var = rows.clone().map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                return Err(SolveError::RankDeficient(format!(
                    "feature {} is constant over the background",
                    j + 1
                )));
            }
            center[j] = mean;
            scale[j] = sd;
        }
        Ok(Self { center, scale })
    }

    fn for_background(data: &Dataset) -> Result<Self, SolveError> {
        Self::from_rows(data.features(), data.background_rows())
    }

    fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.center[j]) / self.scale[j])
    }

    /// Original-scale `(intercept, beta)` from standardized coefficients.
    fn unscale(&self, intercept: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let b: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = b.iter().zip(&self.center).map(|(b, m)| b * m).sum();
        (intercept - shift, b)
    }
}

/// Background mean and standard deviation of each feature: the scaling under
/// which penalties are applied.
pub fn feature_scaling(data: &Dataset) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let st = Standardizer::for_background(data)?;
    Ok((st.center, st.scale))
}

/// Smallest eigenvalue of the background correlation matrix below which the
/// features are treated as collinear. A ridge term on every slope makes such
/// designs well posed, so the check is skipped then.
const COLLINEAR_TOL: f64 = 1e-10;

fn standardized(data: &Dataset, penalty: &Penalty) -> Result<(Standardizer, Dataset), SolveError> {
    let st = Standardizer::for_background(data)?;
    let z = st.transform(data.features());
    let p = data.dim();
    let ridged = (0..p).all(|j| penalty.l2_coef(j) > 0.0);
    if p > 1 && !ridged {
        let bg: Vec<usize> = data.background_rows().collect();
        let mut corr = DMatrix::<f64>::zeros(p, p);
        for &i in &bg {
            for a in 0..p {
                for b in 0..=a {
                    corr[(a, b)] += z[(i, a)] * z[(i, b)];
                }
            }
        }
        corr /= bg.len() as f64;
        corr.fill_upper_triangle_with_lower_triangle();
        let min = corr.symmetric_eigenvalues().min();
        if min < COLLINEAR_TOL {
            return Err(SolveError::RankDeficient(format!(
                "background features are collinear (smallest correlation eigenvalue {min:.3e})"
            )));
        }
    }
    let scaled = data
        .with_features(z)
        .map_err(|e| SolveError::InvalidArgument(e.to_string()))?;
    Ok((st, scaled))
}

fn linear(beta: &[f64], x: &DMatrix<f64>, i: usize) -> f64 {
    beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum()
}

fn with_intercept_layout(data_n1: usize) -> Layout {
    Layout {
        first_penalized: 1,
        residual_scale: data_n1 as f64,
    }
}

fn finish(result: &NewtonResult, penalty: &Penalty) -> Result<(), SolveError> {
    check_rank(result, penalty)
}

/// Maximizes the numerical IPP log-likelihood minus `J(β)`.
pub fn fit_ipp(data: &Dataset, penalty: &Penalty, opts: &OptimOptions) -> Result<ModelFit, SolveError> {
    penalty.validate(data.dim())?;
    let (st, scaled) = standardized(data, penalty)?;
    let p = data.dim();
    let mut start = DVector::zeros(p + 1);
    start[0] = (data.n1() as f64 / data.domain_area()).ln();
    let res = newton_solve(
        |t| ipp_loglik(t[0], &t.as_slice()[1..], &scaled),
        start,
        penalty,
        with_intercept_layout(data.n1()),
        opts,
    )?;
    finish(&res, penalty)?;
    let (alpha, beta) = st.unscale(res.params[0], &res.params.as_slice()[1..]);
    let fitted = (0..data.len())
        .map(|i| (alpha + linear(&beta, data.features(), i)).exp())
        .collect();
    Ok(ModelFit {
        model: ModelKind::Ipp,
        alpha: Some(alpha),
        eta: None,
        beta,
        weight: None,
        converged: true,
        iterations: res.iterations,
        grad_norm: res.residual,
        n1: data.n1(),
        n0: data.n0(),
        domain_area: data.domain_area(),
        seed: None,
        w_rounds: None,
        max_fitted: None,
        fitted,
    })
}

/// `log n1 − log Σ_{y=0} w_i exp(β'x_i)`: the intercept making `Λ̂(D) = n1`.
pub fn normalizing_intercept(beta: &[f64], data: &Dataset) -> f64 {
    let x = data.features();
    let shift = data
        .background_rows()
        .map(|i| linear(beta, x, i))
        .fold(f64::NEG_INFINITY, f64::max);
    let mass: f64 = data
        .background_rows()
        .map(|i| data.row_weight(i) * (linear(beta, x, i) - shift).exp())
        .sum();
    (data.n1() as f64).ln() - shift - mass.ln()
}

/// Maximizes the Maxent log-likelihood minus `J(β)`; the intercept is filled
/// in afterwards so that the fitted intensity integrates to `n1`.
pub fn fit_maxent(data: &Dataset, penalty: &Penalty, opts: &OptimOptions) -> Result<ModelFit, SolveError> {
    penalty.validate(data.dim())?;
    let (st, scaled) = standardized(data, penalty)?;
    let p = data.dim();
    let res = newton_solve(
        |t| maxent_loglik(t.as_slice(), &scaled),
        DVector::zeros(p),
        penalty,
        Layout {
            first_penalized: 0,
            residual_scale: data.n1() as f64,
        },
        opts,
    )?;
    finish(&res, penalty)?;
    let (_, beta) = st.unscale(0.0, res.params.as_slice());
    let alpha = normalizing_intercept(&beta, data);
    let fitted = (0..data.len())
        .map(|i| (alpha + linear(&beta, data.features(), i)).exp())
        .collect();
    Ok(ModelFit {
        model: ModelKind::Maxent,
        alpha: Some(alpha),
        eta: None,
        beta,
        weight: None,
        converged: true,
        iterations: res.iterations,
        grad_norm: res.residual,
        n1: data.n1(),
        n0: data.n0(),
        domain_area: data.domain_area(),
        seed: None,
        w_rounds: None,
        max_fitted: None,
        fitted,
    })
}

/// `log(W n0 / |D|)`, the offset between the logistic and IPP intercepts.
pub fn intercept_offset(data: &Dataset, weight: f64) -> f64 {
    (weight * data.n0() as f64 / data.domain_area()).ln()
}

/// Maximizes the weighted logistic log-likelihood (background weight `weight`)
/// minus `J(β)`. The implied IPP intercept `η̂ + log(W n0/|D|)` is reported as `alpha`.
pub fn fit_logistic(
    data: &Dataset,
    weight: f64,
    penalty: &Penalty,
    opts: &OptimOptions,
) -> Result<ModelFit, SolveError> {
    if !(weight.is_finite() && weight >= 1.0) {
        return Err(SolveError::InvalidArgument(format!("W must be >= 1, got {weight}")));
    }
    penalty.validate(data.dim())?;
    let (st, scaled) = standardized(data, penalty)?;
    let p = data.dim();
    let mut start = DVector::zeros(p + 1);
    start[0] = (data.n1() as f64 / (weight * data.n0() as f64)).ln();
    let res = newton_solve(
        |t| logistic_loglik(t[0], &t.as_slice()[1..], &scaled, weight),
        start,
        penalty,
        with_intercept_layout(data.n1()),
        opts,
    )?;
    finish(&res, penalty)?;
    let (eta, beta) = st.unscale(res.params[0], &res.params.as_slice()[1..]);
    let fitted: Vec<f64> = (0..data.len())
        .map(|i| sigmoid(eta + linear(&beta, data.features(), i)))
        .collect();
    let max_fitted = fitted.iter().copied().fold(0.0, f64::max);
    Ok(ModelFit {
        model: ModelKind::Logistic,
        alpha: Some(eta + intercept_offset(data, weight)),
        eta: Some(eta),
        beta,
        weight: Some(weight),
        converged: true,
        iterations: res.iterations,
        grad_norm: res.residual,
        n1: data.n1(),
        n0: data.n0(),
        domain_area: data.domain_area(),
        seed: None,
        w_rounds: None,
        max_fitted: Some(max_fitted),
        fitted,
    })
}

/// Logistic regression with the background weight raised until the fitted
/// probabilities are all below `w_target_maxfit`, then confirmed by a refit
/// at `w_growth_check` times the weight. Its slopes reproduce the IPP fit.
pub fn fit_iwlr(data: &Dataset, penalty: &Penalty, opts: &OptimOptions) -> Result<ModelFit, SolveError> {
    opts.validate()?;
    let mut weight = opts.w_initial;
    let mut rounds = 0;
    let mut fit = fit_logistic(data, weight, penalty, opts)?;
    loop {
        let max_fit = fit.max_fitted.unwrap_or(0.0);
        if max_fit > opts.w_target_maxfit {
            if rounds == opts.w_max_rounds {
                return Err(SolveError::WeightEscalation { rounds, weight });
            }
            // odds form of W ← (max ŷ / target) W, equal to first order
            weight *= max_fit / (1.0 - max_fit) / opts.w_target_maxfit;
            rounds += 1;
            fit = fit_logistic(data, weight, penalty, opts)?;
            continue;
        }
        let check = fit_logistic(data, weight * opts.w_growth_check, penalty, opts)?;
        let change = fit
            .beta
            .iter()
            .zip(&check.beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= opts.w_change_tol {
            fit = check;
            break;
        }
        if rounds == opts.w_max_rounds {
            return Err(SolveError::WeightEscalation { rounds, weight });
        }
        weight *= opts.w_growth_check;
        rounds += 1;
        fit = check;
    }
    fit.model = ModelKind::Iwlr;
    fit.w_rounds = Some(rounds);
    Ok(fit)
}

/// Maximizes the binned Poisson log-likelihood minus `J(β)`; cell `i` has
/// features `cell_features.row(i)`.
pub fn fit_poisson_llm(
    binned: &BinnedCounts,
    cell_features: &DMatrix<f64>,
    penalty: &Penalty,
    opts: &OptimOptions,
) -> Result<ModelFit, SolveError> {
    let p = cell_features.ncols();
    penalty.validate(p)?;
    if cell_features.nrows() != binned.len() {
        return Err(SolveError::InvalidArgument("cell count mismatch".into()));
    }
    let n1 = binned.total() as usize;
    if n1 == 0 {
        return Err(SolveError::InvalidArgument("no presence counts".into()));
    }
    let st = Standardizer::from_rows(cell_features, 0..cell_features.nrows())?;
    let scaled = st.transform(cell_features);
    let area = binned.cell_area() * binned.len() as f64;
    let mut start = DVector::zeros(p + 1);
    start[0] = (n1 as f64 / area).ln();
    let res = newton_solve(
        |t| poisson_llm_loglik(t[0], &t.as_slice()[1..], binned, &scaled),
        start,
        penalty,
        with_intercept_layout(n1),
        opts,
    )?;
    finish(&res, penalty)?;
    let (alpha, beta) = st.unscale(res.params[0], &res.params.as_slice()[1..]);
    let fitted = (0..cell_features.nrows())
        .map(|i| (alpha + linear(&beta, cell_features, i)).exp())
        .collect();
    Ok(ModelFit {
        model: ModelKind::PoissonLlm,
        alpha: Some(alpha),
        eta: None,
        beta,
        weight: None,
        converged: true,
        iterations: res.iterations,
        grad_norm: res.residual,
        n1,
        n0: binned.len(),
        domain_area: area,
        seed: None,
        w_rounds: None,
        max_fitted: None,
        fitted,
    })
}

/// Bins presence locations onto a regular background grid and fits the
/// binned Poisson model.
pub fn fit_poisson_llm_on_grid<F: FeatureMap + ?Sized>(
    presence: &[Location],
    background: &[Location],
    domain: &Domain,
    feature_map: &F,
    penalty: &Penalty,
    opts: &OptimOptions,
) -> Result<ModelFit, SolveError> {
    let binned = bin_presence(presence, background, domain)
        .map_err(|e| SolveError::InvalidArgument(e.to_string()))?;
    let rows: Vec<Vec<f64>> = background.iter().map(|z| feature_map.features(z)).collect();
    let p = rows.first().map_or(0, Vec::len);
    let cells = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    fit_poisson_llm(&binned, &cells, penalty, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble_dataset, StandardFeatures};
    use approx::assert_abs_diff_eq;

    fn symmetric() -> Dataset {
        Dataset::from_rows(vec![true, false, false], &[vec![0.0], vec![-1.0], vec![1.0]], 1.0, None).unwrap()
    }

    #[test]
    fn symmetric_moment_condition() {
        let opts = OptimOptions::default();
        let ipp = fit_ipp(&symmetric(), &Penalty::none(), &opts).unwrap();
        assert_abs_diff_eq!(ipp.beta[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ipp.alpha.unwrap(), 0.0, epsilon = 1e-12);
        let me = fit_maxent(&symmetric(), &Penalty::none(), &opts).unwrap();
        assert_abs_diff_eq!(me.beta[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(me.alpha.unwrap(), 0.0, epsilon = 1e-12);
        let iw = fit_iwlr(&symmetric(), &Penalty::none(), &opts).unwrap();
        assert_abs_diff_eq!(iw.beta[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn logistic_balanced_symmetric_intercept() {
        let rows = [vec![0.7], vec![0.7], vec![-0.7], vec![-0.7], vec![0.2], vec![-0.2]];
        let d = Dataset::from_rows(vec![true, true, false, false, true, false], &rows, 1.0, None);
        // presence at +a, background at −a plus one mirrored pair so the fit exists
        let d = d.unwrap();
        let f = fit_logistic(&d, 1.0, &Penalty::none(), &OptimOptions::default());
        // presence {0.7, 0.7, 0.2} vs background {−0.7, −0.7, −0.2} is separable
        assert!(matches!(f, Err(SolveError::Divergence { .. })), "{f:?}");

        let rows = [vec![0.7], vec![-0.3], vec![-0.7], vec![0.3]];
        let d = Dataset::from_rows(vec![true, true, false, false], &rows, 1.0, None).unwrap();
        let f = fit_logistic(&d, 1.0, &Penalty::none(), &OptimOptions::default()).unwrap();
        assert_abs_diff_eq!(f.eta.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_feature_is_rank_deficient() {
        let rows = [vec![1.0, 0.3], vec![1.0, 0.1], vec![1.0, 0.9]];
        let d = Dataset::from_rows(vec![true, false, false], &rows, 1.0, None).unwrap();
        assert!(matches!(
            fit_ipp(&d, &Penalty::none(), &OptimOptions::default()),
            Err(SolveError::RankDeficient(_))
        ));
    }

    #[test]
    fn collinear_features_rank_deficient() {
        let rows: Vec<Vec<f64>> = [0.1, 0.5, -0.3, 0.2, 0.8, -0.9, 0.4]
            .iter()
            .map(|&v| vec![v, 2.0 * v + 1.0])
            .collect();
        let d = Dataset::from_rows(vec![true, true, false, false, false, false, false], &rows, 1.0, None).unwrap();
        assert!(matches!(
            fit_ipp(&d, &Penalty::none(), &OptimOptions::default()),
            Err(SolveError::RankDeficient(_))
        ));
        // a ridge makes the problem well posed again
        assert!(fit_ipp(&d, &Penalty::l2(0.3), &OptimOptions::default()).is_ok());
    }

    #[test]
    fn single_cell_is_rank_deficient() {
        let b = BinnedCounts::new(vec![4], 1.0).unwrap();
        let cells = DMatrix::from_element(1, 1, 0.5);
        assert!(matches!(
            fit_poisson_llm(&b, &cells, &Penalty::none(), &OptimOptions::default()),
            Err(SolveError::RankDeficient(_))
        ));
    }

    #[test]
    fn presence_outside_hull_diverges() {
        let rows = [vec![2.0], vec![2.5], vec![-1.0], vec![0.0], vec![1.0]];
        let d = Dataset::from_rows(vec![true, true, false, false, false], &rows, 1.0, None).unwrap();
        let r = fit_ipp(&d, &Penalty::none(), &OptimOptions::default());
        match r {
            Err(SolveError::Divergence { direction, .. }) => assert!(direction[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coincident_llm_matches_ipp() {
        let dom = Domain::interval(0.0, 2.0).unwrap();
        let bg = dom.grid_centers(50);
        let pres: Vec<Location> = [3, 7, 7, 20, 31, 31, 31, 44, 45, 49].iter().map(|&k| bg[k].clone()).collect();
        let f = StandardFeatures::Identity;
        let data = assemble_dataset(&pres, &bg, &f, dom.area(), None).unwrap();
        let opts = OptimOptions::default();
        let ipp = fit_ipp(&data, &Penalty::none(), &opts).unwrap();
        let llm = fit_poisson_llm_on_grid(&pres, &bg, &dom, &f, &Penalty::none(), &opts).unwrap();
        assert_abs_diff_eq!(ipp.beta[0], llm.beta[0], epsilon = 1e-12);
        assert_abs_diff_eq!(ipp.alpha.unwrap(), llm.alpha.unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn json_keys() {
        let fit = fit_ipp(&symmetric(), &Penalty::none(), &OptimOptions::default())
            .unwrap()
            .with_seed(9);
        let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
        for k in ["model", "alpha", "eta", "beta", "W", "converged", "iterations", "grad_norm", "n1", "n0", "domain_area", "seed"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        assert_eq!(v["model"], "ipp");
        assert_eq!(v["seed"], 9);
    }
}
