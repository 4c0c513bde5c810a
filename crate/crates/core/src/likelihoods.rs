//! Log-likelihoods of the presence-only model family with exact derivatives.
//!
//! Parameter vectors put the intercept first (`alpha` or `eta`), then the
//! slopes. Additive constants that do not depend on the parameters
//! (`log n1!`, `Σ log N(A_i)!`) are dropped, so raw values of different
//! likelihoods are only comparable through the identities relating them.
//!
//! Background sums always use the dataset's quadrature weights; the uniform
//! case is just `w_i = |D| / n0`.

use nalgebra::{DMatrix, DVector};

use crate::data::{grid_side, Dataset, Domain, Location};
use crate::error::{DataError, LikelihoodError};

/// Largest exponent evaluated; beyond it the point counts as infeasible.
pub const MAX_EXPONENT: f64 = 700.0;

/// Value, gradient and Hessian of a log-likelihood at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl ObjectiveEval {
    fn zeros(dim: usize) -> Self {
        Self {
            value: 0.0,
            gradient: DVector::zeros(dim),
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    /// Adds `coef * v v'` to the Hessian (lower triangle only, see `symmetrize`).
    fn rank_one(&mut self, coef: f64, v: &[f64]) {
        let k = v.len();
        for a in 0..k {
            let ca = coef * v[a];
            for b in 0..=a {
                self.hessian[(a, b)] += ca * v[b];
            }
        }
    }

    fn symmetrize(&mut self) {
        let k = self.hessian.nrows();
        for a in 0..k {
            for b in 0..a {
                self.hessian[(b, a)] = self.hessian[(a, b)];
            }
        }
    }
}

fn check_dims(data: &Dataset, beta: &[f64]) -> Result<(), LikelihoodError> {
    if beta.len() != data.dim() {
        return Err(LikelihoodError::InvalidParameter(format!(
            "{} slopes for {} features",
            beta.len(),
            data.dim()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(LikelihoodError::InvalidParameter("non-finite slope".into()));
    }
    Ok(())
}

/// Row `i` of `x` with a leading 1, written into `buf`.
fn augmented_row(x: &DMatrix<f64>, i: usize, buf: &mut [f64]) {
    buf[0] = 1.0;
    for j in 0..x.ncols() {
        buf[j + 1] = x[(i, j)];
    }
}

fn dot(beta: &[f64], x: &DMatrix<f64>, i: usize) -> f64 {
    beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum()
}

fn guarded_exp(u: f64, row: usize) -> Result<f64, LikelihoodError> {
    if u > MAX_EXPONENT || u.is_nan() {
        Err(LikelihoodError::Infeasible { row, exponent: u })
    } else {
        Ok(u.exp())
    }
}

/// Numerical IPP log-likelihood
/// `Σ_{y=1} (α + β'x_i) − Σ_{y=0} w_i exp(α + β'x_i)`.
pub fn ipp_loglik(alpha: f64, beta: &[f64], data: &Dataset) -> Result<ObjectiveEval, LikelihoodError> {
    check_dims(data, beta)?;
    if !alpha.is_finite() {
        return Err(LikelihoodError::InvalidParameter("non-finite intercept".into()));
    }
    let x = data.features();
    let k = beta.len() + 1;
    let mut out = ObjectiveEval::zeros(k);
    let mut row = vec![0.0; k];
    for i in 0..data.len() {
        let u = alpha + dot(beta, x, i);
        augmented_row(x, i, &mut row);
        if data.is_presence(i) {
            out.value += u;
            for (g, v) in out.gradient.iter_mut().zip(&row) {
                *g += v;
            }
        } else {
            let m = data.row_weight(i) * guarded_exp(u, i)?;
            out.value -= m;
            for (g, v) in out.gradient.iter_mut().zip(&row) {
                *g -= m * v;
            }
            out.rank_one(-m, &row);
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Maxent (conditional IPP) log-likelihood
/// `Σ_{y=1} β'x_i − n1 log Σ_{y=0} w_i exp(β'x_i)`; no intercept.
pub fn maxent_loglik(beta: &[f64], data: &Dataset) -> Result<ObjectiveEval, LikelihoodError> {
    check_dims(data, beta)?;
    let x = data.features();
    let p = beta.len();
    let n1 = data.n1() as f64;

    let shift = data
        .background_rows()
        .map(|i| dot(beta, x, i))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut presence_sum = 0.0;
    let mut presence_x = DVector::<f64>::zeros(p);
    let mut mass = 0.0;
    let mut first = DVector::<f64>::zeros(p);
    let mut second = DMatrix::<f64>::zeros(p, p);
    for i in 0..data.len() {
        let u = dot(beta, x, i);
        if data.is_presence(i) {
            presence_sum += u;
            for j in 0..p {
                presence_x[j] += x[(i, j)];
            }
        } else {
            let m = data.row_weight(i) * (u - shift).exp();
            mass += m;
            for a in 0..p {
                first[a] += m * x[(i, a)];
                for b in 0..=a {
                    second[(a, b)] += m * x[(i, a)] * x[(i, b)];
                }
            }
        }
    }
    let log_norm = shift + mass.ln();
    if !log_norm.is_finite() {
        return Err(LikelihoodError::Infeasible {
            row: 0,
            exponent: shift,
        });
    }
    let mean = &first / mass;
    let mut hessian = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            let cov = second[(a, b)] / mass - mean[a] * mean[b];
            hessian[(a, b)] = -n1 * cov;
            hessian[(b, a)] = -n1 * cov;
        }
    }
    Ok(ObjectiveEval {
        value: presence_sum - n1 * log_norm,
        gradient: presence_x - n1 * mean,
        hessian,
    })
}

/// `log(1 + e^t)` without overflow or cancellation.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `e^t / (1 + e^t)`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Case weight of a row in the weighted logistic likelihood: 1 for presence,
/// `W · w_i n0 / |D|` for background (which is `W` under uniform weights).
pub fn logistic_case_weight(data: &Dataset, row: usize, weight: f64) -> f64 {
    if data.is_presence(row) {
        1.0
    } else {
        weight * data.row_weight(row) * data.n0() as f64 / data.domain_area()
    }
}

/// Weighted logistic log-likelihood
/// `Σ_{y=1} (η + β'x_i) − Σ_i c_i log(1 + exp(η + β'x_i))`
/// with case weights from [`logistic_case_weight`]. `weight = 1` is ordinary
/// logistic regression of presence against background.
pub fn logistic_loglik(
    eta: f64,
    beta: &[f64],
    data: &Dataset,
    weight: f64,
) -> Result<ObjectiveEval, LikelihoodError> {
    check_dims(data, beta)?;
    if !eta.is_finite() {
        return Err(LikelihoodError::InvalidParameter("non-finite intercept".into()));
    }
    if !(weight.is_finite() && weight >= 1.0) {
        return Err(LikelihoodError::InvalidParameter(format!(
            "background weight must be >= 1, got {weight}"
        )));
    }
    let x = data.features();
    let k = beta.len() + 1;
    let mut out = ObjectiveEval::zeros(k);
    let mut row = vec![0.0; k];
    for i in 0..data.len() {
        let t = eta + dot(beta, x, i);
        let c = logistic_case_weight(data, i, weight);
        let s = sigmoid(t);
        augmented_row(x, i, &mut row);
        let resid = if data.is_presence(i) { 1.0 } else { 0.0 } - c * s;
        out.value += if data.is_presence(i) { t } else { 0.0 } - c * softplus(t);
        for (g, v) in out.gradient.iter_mut().zip(&row) {
            *g += resid * v;
        }
        out.rank_one(-c * s * (1.0 - s), &row);
    }
    out.symmetrize();
    Ok(out)
}

/// Presence counts per background cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCounts {
    counts: Vec<u64>,
    cell_area: f64,
}

impl BinnedCounts {
    pub fn new(counts: Vec<u64>, cell_area: f64) -> Result<Self, DataError> {
        if counts.is_empty() {
            return Err(DataError::InvalidArgument("no cells".into()));
        }
        if !(cell_area.is_finite() && cell_area > 0.0) {
            return Err(DataError::InvalidArgument(format!("cell area {cell_area}")));
        }
        Ok(Self { counts, cell_area })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Binned (Berman–Turner) Poisson log-likelihood
/// `Σ_i N(A_i)(α + β'x_i) − cell_area · Σ_i exp(α + β'x_i)`, with `x_i` the
/// features of cell `i` (rows of `cell_features`).
pub fn poisson_llm_loglik(
    alpha: f64,
    beta: &[f64],
    binned: &BinnedCounts,
    cell_features: &DMatrix<f64>,
) -> Result<ObjectiveEval, LikelihoodError> {
    if cell_features.nrows() != binned.len() {
        return Err(LikelihoodError::InvalidParameter(format!(
            "{} cells but {} feature rows",
            binned.len(),
            cell_features.nrows()
        )));
    }
    if beta.len() != cell_features.ncols() || !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
        return Err(LikelihoodError::InvalidParameter("bad parameter vector".into()));
    }
    let k = beta.len() + 1;
    let mut out = ObjectiveEval::zeros(k);
    let mut row = vec![0.0; k];
    for (i, &n) in binned.counts().iter().enumerate() {
        let u = alpha + dot(beta, cell_features, i);
        let m = binned.cell_area() * guarded_exp(u, i)?;
        augmented_row(cell_features, i, &mut row);
        let n = n as f64;
        out.value += n * u - m;
        for (g, v) in out.gradient.iter_mut().zip(&row) {
            *g += (n - m) * v;
        }
        out.rank_one(-m, &row);
    }
    out.symmetrize();
    Ok(out)
}

/// Assigns each presence location to the nearest centre of a regular background
/// grid. Ties go to the lower cell index.
pub fn bin_presence(
    presence: &[Location],
    background: &[Location],
    domain: &Domain,
) -> Result<BinnedCounts, DataError> {
    let d = domain.dim();
    let m = grid_side(background.len(), d).ok_or_else(|| {
        DataError::InvalidArgument(format!(
            "{} background points do not form an m^{d} grid",
            background.len()
        ))
    })?;
    let expected = domain.grid_centers(m);
    let scale: f64 = domain
        .bounds()
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max);
    let on_grid = background.len() == expected.len()
        && background.iter().zip(&expected).all(|(a, b)| {
            a.len() == d && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-9 * scale)
        });
    if !on_grid {
        return Err(DataError::InvalidArgument(
            "background is not the regular grid of cell centres for this domain".into(),
        ));
    }

    let mut counts = vec![0u64; background.len()];
    for z in presence {
        if z.len() != d {
            return Err(DataError::InvalidArgument("presence location has wrong dimension".into()));
        }
        let mut index = 0;
        let mut stride = 1;
        for (&v, &(lo, hi)) in z.iter().zip(domain.bounds()) {
            let h = (hi - lo) / m as f64;
            let pos = (v - lo) / h;
            // an exact cell boundary is equidistant from two centres: take the lower
            let k = if pos.fract() == 0.0 && pos > 0.0 {
                pos as usize - 1
            } else {
                pos.floor().max(0.0) as usize
            };
            index += k.min(m - 1) * stride;
            stride *= m;
        }
        counts[index] += 1;
    }
    BinnedCounts::new(counts, domain.area() / background.len() as f64)
}

/// Bins presence rows of `data` to their nearest background row in feature
/// space (lowest background index on ties). Returns the counts and the
/// background feature matrix. Used when only features, not locations, are known.
pub fn bin_by_features(data: &Dataset) -> Result<(BinnedCounts, DMatrix<f64>), DataError> {
    if data.quad_weights().is_some() {
        return Err(DataError::InvalidArgument(
            "binned Poisson model needs equal-area cells (no quadrature weights)".into(),
        ));
    }
    let x = data.features();
    let bg: Vec<usize> = data.background_rows().collect();
    let mut counts = vec![0u64; bg.len()];
    for i in data.presence_rows() {
        let mut best = (f64::INFINITY, 0);
        for (c, &b) in bg.iter().enumerate() {
            let d2: f64 = (0..x.ncols()).map(|j| (x[(i, j)] - x[(b, j)]).powi(2)).sum();
            if d2 < best.0 {
                best = (d2, c);
            }
        }
        counts[best.1] += 1;
    }
    let cells = DMatrix::from_fn(bg.len(), x.ncols(), |r, j| x[(bg[r], j)]);
    Ok((
        BinnedCounts::new(counts, data.domain_area() / bg.len() as f64)?,
        cells,
    ))
}
