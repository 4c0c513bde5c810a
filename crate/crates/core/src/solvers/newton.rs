//! Damped Newton ascent for concave objectives, with a proximal variant for
//! L1 terms.
//!
//! The smooth part (log-likelihood plus any ridge term) is modelled by its
//! second-order expansion. Without L1 the step solves the Newton system by
//! Cholesky; with L1 the quadratic model plus the L1 term is minimized by
//! cyclic coordinate descent with soft-thresholding. Steps are damped by
//! backtracking on the full penalized objective.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::penalty::Penalty;
use crate::error::{LikelihoodError, SolveError};
use crate::likelihoods::ObjectiveEval;

/// Solver and weight-escalation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    /// Optimality residual tolerance, relative to the residual scale of the problem.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    /// Coefficient magnitude (standardized scale) treated as divergence.
    pub divergence_bound: f64,
    pub w_initial: f64,
    /// Largest acceptable fitted probability for the weighted logistic fit.
    pub w_target_maxfit: f64,
    /// Factor for the final stability refit.
    pub w_growth_check: f64,
    pub w_change_tol: f64,
    pub w_max_rounds: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 200,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            divergence_bound: 1e3,
            w_initial: 1e4,
            w_target_maxfit: 1e-9,
            w_growth_check: 100.0,
            w_change_tol: 1e-8,
            w_max_rounds: 5,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            self.grad_tol,
            self.shrink,
            self.sufficient_decrease,
            self.divergence_bound,
            self.w_initial,
            self.w_target_maxfit,
            self.w_growth_check,
            self.w_change_tol,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.max_iter == 0
            || self.grad_tol >= 1.0
            || self.shrink >= 1.0
            || self.sufficient_decrease >= 1.0
            || self.w_initial < 1.0
        {
            return Err(SolveError::InvalidArgument(format!("invalid options {self:?}")));
        }
        Ok(())
    }
}

/// What [`newton_solve`] needs to know about the parameter layout.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    /// Index of the first penalized coordinate (1 when an intercept leads).
    pub first_penalized: usize,
    /// Residuals are divided by this before comparison with `grad_tol`.
    pub residual_scale: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub params: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Scaled optimality residual at `params`.
    pub residual: f64,
    /// Ratio of smallest to largest eigenvalue of the penalized negative Hessian.
    pub conditioning: f64,
}

const SINGULAR_RATIO: f64 = 1e-12;
const CD_MAX_SWEEPS: usize = 10_000;
/// Newton steps (standardized scale) must also be this small at convergence.
const STEP_TOL: f64 = 1e-6;

struct Penalized<'a> {
    penalty: &'a Penalty,
    first: usize,
}

impl Penalized<'_> {
    fn l1(&self, k: usize) -> f64 {
        if k < self.first {
            0.0
        } else {
            self.penalty.l1_coef(k - self.first)
        }
    }

    fn l2(&self, k: usize) -> f64 {
        if k < self.first {
            0.0
        } else {
            self.penalty.l2_coef(k - self.first)
        }
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.penalty.value(&theta.as_slice()[self.first..])
    }

    fn l1_value(&self, theta: &DVector<f64>) -> f64 {
        (self.first..theta.len()).map(|k| self.l1(k) * theta[k].abs()).sum()
    }

    /// Gradient of the smooth part: log-likelihood minus ridge term.
    fn smooth_gradient(&self, eval: &ObjectiveEval, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(theta.len(), |k, _| eval.gradient[k] - self.l2(k) * theta[k])
    }

    /// Negative Hessian of the smooth part.
    fn curvature(&self, eval: &ObjectiveEval) -> DMatrix<f64> {
        let mut a = -eval.hessian.clone();
        for k in 0..a.nrows() {
            a[(k, k)] += self.l2(k);
        }
        a
    }

    /// Infinity norm of the minimum-norm element of the superdifferential.
    fn residual(&self, grad: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        (0..theta.len())
            .map(|k| {
                let a = self.l1(k);
                if a == 0.0 {
                    grad[k].abs()
                } else if theta[k] != 0.0 {
                    (grad[k] - a * theta[k].signum()).abs()
                } else {
                    (grad[k].abs() - a).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

fn soft_threshold(z: f64, a: f64) -> f64 {
    if z > a {
        z - a
    } else if z < -a {
        z + a
    } else {
        0.0
    }
}

fn conditioning(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigenvalues();
    let max = eig.max();
    if max <= 0.0 {
        return 0.0;
    }
    (eig.min() / max).max(0.0)
}

/// Solves `A d = g`, adding a growing ridge if `A` is numerically singular.
fn newton_direction(a: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return ch.solve(g);
    }
    let scale = a.diagonal().amax().max(1.0);
    let mut tau = 1e-12 * scale;
    loop {
        let mut reg = a.clone();
        for k in 0..reg.nrows() {
            reg[(k, k)] += tau;
        }
        if let Some(ch) = Cholesky::new(reg) {
            return ch.solve(g);
        }
        tau *= 100.0;
    }
}

/// Coordinate descent for `min_v −g'(v−θ) + ½(v−θ)'A(v−θ) + Σ a_k |v_k|`;
/// returns the step `v − θ`.
fn proximal_direction(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    theta: &DVector<f64>,
    pen: &Penalized<'_>,
) -> DVector<f64> {
    let k = theta.len();
    let mut d = DVector::<f64>::zeros(k);
    // a·d maintained incrementally
    let mut ad = DVector::<f64>::zeros(k);
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..k {
            let ajj = a[(j, j)];
            if ajj <= 0.0 {
                continue;
            }
            let c = g[j] - (ad[j] - ajj * d[j]);
            let v = soft_threshold(ajj * theta[j] + c, pen.l1(j)) / ajj;
            let new_d = v - theta[j];
            let delta = new_d - d[j];
            if delta != 0.0 {
                for r in 0..k {
                    ad[r] += a[(r, j)] * delta;
                }
                d[j] = new_d;
                max_change = max_change.max(delta.abs() / (1.0 + theta[j].abs()));
            }
        }
        if max_change <= 1e-15 {
            break;
        }
    }
    d
}

/// Maximizes `objective(θ) − J(θ[first_penalized..])` from `start`.
///
/// Overflow in the objective counts as a rejected trial point. Reports
/// divergence when the penalized coordinates exceed `divergence_bound`
/// (or keep growing until `max_iter`), and non-convergence otherwise.
pub fn newton_solve<F>(
    objective: F,
    start: DVector<f64>,
    penalty: &Penalty,
    layout: Layout,
    opts: &OptimOptions,
) -> Result<NewtonResult, SolveError>
where
    F: Fn(&DVector<f64>) -> Result<ObjectiveEval, LikelihoodError>,
{
    opts.validate()?;
    let pen = Penalized {
        penalty,
        first: layout.first_penalized,
    };
    penalty.validate(start.len().saturating_sub(layout.first_penalized))?;
    let scale = layout.residual_scale.max(1.0);

    let mut theta = start;
    let mut eval = objective(&theta)?;
    let mut growth_streak = 0usize;
    let mut last_norm = slope_norm(&theta, pen.first);

    for iter in 0..=opts.max_iter {
        let grad = pen.smooth_gradient(&eval, &theta);
        let a = pen.curvature(&eval);
        let residual = pen.residual(&grad, &theta) / scale;
        let step = if penalty.has_l1() {
            proximal_direction(&a, &grad, &theta, &pen)
        } else {
            newton_direction(&a, &grad)
        };
        // under separation the score vanishes while Newton steps stay O(1)
        let step_small = step.amax() <= STEP_TOL * (1.0 + theta.amax());
        if residual <= opts.grad_tol && step_small {
            // a flat objective away from the origin means the optimum is at infinity
            let flat = a.diagonal().amax() <= 1e-10 * scale;
            if flat && slope_norm(&theta, pen.first) > 0.0 {
                return Err(divergence(&theta, pen.first, iter));
            }
            return Ok(NewtonResult {
                value: eval.value - pen.value(&theta),
                params: theta,
                iterations: iter,
                residual,
                conditioning: conditioning(&a),
            });
        }
        if iter == opts.max_iter {
            if growth_streak >= 10 {
                return Err(divergence(&theta, pen.first, iter));
            }
            return Err(SolveError::NonConvergence {
                iterations: iter,
                residual,
                last: theta.iter().copied().collect(),
            });
        }

        // predicted ascent of the penalized objective for the full step
        let l1_now = pen.l1_value(&theta);
        let full = &theta + &step;
        let predicted = grad.dot(&step) + l1_now - pen.l1_value(&full);
        let current = eval.value - pen.value(&theta);

        // never move further than twice the divergence bound in one step
        let mut t = (2.0 * opts.divergence_bound / step.amax()).min(1.0);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &theta + t * &step;
            if let Ok(e) = objective(&trial) {
                let f = e.value - pen.value(&trial);
                let negligible = predicted.abs() <= 1e-13 * (1.0 + current.abs());
                if f.is_finite()
                    && (f >= current + opts.sufficient_decrease * t * predicted || negligible)
                {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= opts.shrink;
        }
        let Some((next, next_eval)) = accepted else {
            return Err(SolveError::NonConvergence {
                iterations: iter,
                residual,
                last: theta.iter().copied().collect(),
            });
        };
        theta = next;
        eval = next_eval;

        let norm = slope_norm(&theta, pen.first);
        if norm > opts.divergence_bound {
            return Err(divergence(&theta, pen.first, iter + 1));
        }
        growth_streak = if norm > last_norm { growth_streak + 1 } else { 0 };
        last_norm = norm;
    }
    unreachable!("loop returns by max_iter")
}

fn slope_norm(theta: &DVector<f64>, first: usize) -> f64 {
    theta.rows(first, theta.len() - first).amax()
}

fn divergence(theta: &DVector<f64>, first: usize, iterations: usize) -> SolveError {
    let slopes = theta.rows(first, theta.len() - first);
    let norm = slopes.norm();
    SolveError::Divergence {
        direction: slopes.iter().map(|v| v / norm).collect(),
        iterations,
    }
}

/// Rejects a converged, unpenalized solution whose curvature is singular.
pub(crate) fn check_rank(result: &NewtonResult, penalty: &Penalty) -> Result<(), SolveError> {
    let strictly_convex = penalty.kind != super::PenaltyKind::None && penalty.lambda > 0.0;
    if result.conditioning < SINGULAR_RATIO && !strictly_convex {
        return Err(SolveError::RankDeficient(format!(
            "Hessian at the optimum is singular (eigenvalue ratio {:e}); features are collinear",
            result.conditioning
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn scalar<F: Fn(f64) -> (f64, f64, f64)>(f: F) -> impl Fn(&DVector<f64>) -> Result<ObjectiveEval, LikelihoodError> {
        move |t: &DVector<f64>| {
            let (v, g, h) = f(t[0]);
            Ok(ObjectiveEval {
                value: v,
                gradient: DVector::from_element(1, g),
                hessian: DMatrix::from_element(1, 1, h),
            })
        }
    }

    fn layout() -> Layout {
        Layout {
            first_penalized: 0,
            residual_scale: 1.0,
        }
    }

    /// Golden-section maximization on [lo, hi]; the independent 1-D oracle.
    fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut a = hi - r * (hi - lo);
        let mut b = lo + r * (hi - lo);
        let (mut fa, mut fb) = (f(a), f(b));
        while hi - lo > 1e-12 {
            if fa < fb {
                lo = a;
                a = b;
                fa = fb;
                b = lo + r * (hi - lo);
                fb = f(b);
            } else {
                hi = b;
                b = a;
                fb = fa;
                a = hi - r * (hi - lo);
                fa = f(a);
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quadratic_in_two_iterations() {
        let f = scalar(|x| (-(x - 3.0).powi(2), -2.0 * (x - 3.0), -2.0));
        let r = newton_solve(f, DVector::zeros(1), &Penalty::none(), layout(), &OptimOptions::default()).unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-14);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn l1_threshold_zeroes_solution() {
        // slope of −(x−3)² at 0 is 6 < 7
        let f = scalar(|x| (-(x - 3.0).powi(2), -2.0 * (x - 3.0), -2.0));
        let r = newton_solve(f, DVector::from_element(1, 1.0), &Penalty::l1(7.0), layout(), &OptimOptions::default())
            .unwrap();
        assert_eq!(r.params[0], 0.0);
        // below the threshold: soft-thresholded optimum 3 − λ/2
        let f = scalar(|x| (-(x - 3.0).powi(2), -2.0 * (x - 3.0), -2.0));
        let r = newton_solve(f, DVector::zeros(1), &Penalty::l1(2.0), layout(), &OptimOptions::default()).unwrap();
        assert!((r.params[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_golden_section_on_random_concave() {
        // f(x) = −c δ² − g (e^δ − 1 − δ) − d δ⁴ with δ = x − m: asymmetric,
        // strictly concave, and evaluated without cancellation near its peak
        let mut rng = rng_from_seed(17);
        for _ in 0..25 {
            let m: f64 = rng.random_range(-3.0..3.0);
            let c: f64 = rng.random_range(0.05..2.0);
            let g: f64 = rng.random_range(0.0..3.0);
            let d: f64 = rng.random_range(0.0..0.5);
            let val = move |x: f64| {
                let t = x - m;
                -c * t * t - g * (t.exp_m1() - t) - d * t.powi(4)
            };
            let f = scalar(move |x| {
                let t = x - m;
                (
                    val(x),
                    -2.0 * c * t - g * t.exp_m1() - 4.0 * d * t.powi(3),
                    -2.0 * c - g * t.exp() - 12.0 * d * t * t,
                )
            });
            let r = newton_solve(f, DVector::zeros(1), &Penalty::none(), layout(), &OptimOptions::default()).unwrap();
            let oracle = golden_max(val, -20.0, 20.0);
            assert!((r.params[0] - oracle).abs() < 1e-8, "{} vs {oracle}", r.params[0]);
        }
    }

    #[test]
    fn unbounded_ascent_diverges() {
        // f(x) = x − log(1 + e^x)/2 increases without bound
        let f = scalar(|x| {
            let s = crate::likelihoods::sigmoid(x);
            (x - 0.5 * crate::likelihoods::softplus(x), 1.0 - 0.5 * s, -0.5 * s * (1.0 - s))
        });
        let r = newton_solve(f, DVector::zeros(1), &Penalty::none(), layout(), &OptimOptions::default());
        assert!(matches!(r, Err(SolveError::Divergence { .. })), "{r:?}");
    }

    #[test]
    fn max_iter_is_non_convergence() {
        let f = scalar(|x| (-(x - 3.0).powi(4), -4.0 * (x - 3.0).powi(3), -12.0 * (x - 3.0).powi(2)));
        let opts = OptimOptions {
            max_iter: 3,
            ..OptimOptions::default()
        };
        let r = newton_solve(f, DVector::zeros(1), &Penalty::none(), layout(), &opts);
        match r {
            Err(SolveError::NonConvergence { iterations, last, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_trial_points_are_backtracked() {
        // f(x) = a x − e^x peaks at ln a = 1.5; the first Newton step from −5
        // overshoots into the guarded region x > 2
        let a = 1.5f64.exp();
        let f = move |t: &DVector<f64>| {
            let x = t[0];
            if x > 2.0 {
                return Err(LikelihoodError::Infeasible { row: 0, exponent: x });
            }
            Ok(ObjectiveEval {
                value: a * x - x.exp(),
                gradient: DVector::from_element(1, a - x.exp()),
                hessian: DMatrix::from_element(1, 1, -x.exp()),
            })
        };
        let r = newton_solve(f, DVector::from_element(1, -5.0), &Penalty::none(), layout(), &OptimOptions::default())
            .unwrap();
        assert!((r.params[0] - 1.5).abs() < 1e-12);
    }
}
