use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{dot, soft_threshold, SolverOptions};
use crate::data::{Columns, Dataset};
use crate::error::{Error, Result};
use crate::stats::{sigmoid, softplus};

/// Curvature floor for the quadratic model; keeps Newton steps finite when
/// predictions saturate.
const WEIGHT_FLOOR: f64 = 1e-5;
const MAX_NEWTON_STEPS: usize = 200;
const MAX_HALVINGS: usize = 60;
const INNER_TOL_START: f64 = 1e-4;
/// Relative objective change indistinguishable from floating-point noise.
const ROUNDING: f64 = 1e-14;

/// Solution of the l1-penalized logistic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub coefficients: Array1<f64>,
    pub lambda: f64,
    pub objective_value: f64,
    /// Coordinate sweeps performed.
    pub n_iterations: usize,
    pub converged: bool,
}

impl FittedModel {
    /// Indices with a nonzero coefficient.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.n_iterations,
            })
        }
    }
}

/// Smallest penalty for which the zero vector is optimal:
/// `|X'(y - 1/2)|_inf / n`.
pub fn logistic_lambda_max(data: &Dataset) -> f64 {
    lambda_max_cols(data.x(), data.y_slice(), None)
}

pub(crate) fn lambda_max_cols<C: Columns + ?Sized>(x: &C, y: &[f64], excluded: Option<usize>) -> f64 {
    let n = x.n_rows() as f64;
    let centred: Vec<f64> = y.iter().map(|v| v - 0.5).collect();
    (0..x.n_cols())
        .filter(|&k| Some(k) != excluded)
        .map(|k| dot(x.col(k), &centred).abs() / n)
        .fold(0.0, f64::max)
}

/// Penalized negative log-likelihood at `beta`.
pub fn logistic_objective(data: &Dataset, beta: &[f64], lambda: f64) -> f64 {
    let mut eta = vec![0.0; data.n()];
    data.x().mul_into(beta, &mut eta);
    objective_from_eta(&eta, data.y_slice(), beta, lambda)
}

/// Gradient of the smooth part, `X'(g(X beta) - y) / n`.
pub fn logistic_gradient(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    full_gradient(data.x(), data.y_slice(), beta)
}

fn mean_loss(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(&e, &yi)| softplus(e) - yi * e).sum::<f64>() / eta.len() as f64
}

fn objective_from_eta(eta: &[f64], y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    mean_loss(eta, y) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Mean binomial deviance `-2/m sum [y log p + (1-y) log(1-p)]` of
/// predictions `X beta` on a held-out set.
pub(crate) fn held_out_deviance<C: Columns + ?Sized>(x: &C, y: &[f64], beta: &[f64]) -> f64 {
    let mut eta = vec![0.0; x.n_rows()];
    x.mul_into(beta, &mut eta);
    2.0 * mean_loss(&eta, y)
}

#[derive(Debug, Clone)]
pub(crate) struct LogisticSolve {
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Mean loss without the penalty.
    pub loss: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl LogisticSolve {
    /// Fraction of the null deviance explained (null model: every
    /// probability 1/2, since there is no intercept).
    pub fn deviance_ratio(&self) -> f64 {
        1.0 - self.loss / std::f64::consts::LN_2
    }

    pub fn into_model(self, lambda: f64) -> FittedModel {
        FittedModel {
            coefficients: Array1::from(self.beta),
            lambda,
            objective_value: self.objective,
            n_iterations: self.sweeps,
            converged: self.converged,
        }
    }
}

/// Proximal Newton: each outer step minimizes the penalized second-order
/// model of the loss by cyclic coordinate descent, then backtracks on the
/// true objective so the objective sequence never increases.
///
/// `excluded` pins one coordinate at zero, which fits the model on `X_{-j}`
/// without copying the design.
pub(crate) fn solve_logistic<C: Columns + ?Sized>(
    x: &C,
    y: &[f64],
    lambda: f64,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
    excluded: Option<usize>,
    record_trace: bool,
) -> LogisticSolve {
    let p = x.n_cols();
    let mut allowed = vec![true; p];
    if let Some(j) = excluded {
        allowed[j] = false;
    }
    let warm_support = warm.map_or(0, |b| b.iter().filter(|&&v| v != 0.0).count());
    if warm_support == 0 || 2 * warm_support >= p {
        return solve_masked(x, y, lambda, opts, warm, &allowed, record_trace);
    }

    // working set: solve on the warm support first, then add every
    // coordinate whose gradient violates the optimality conditions
    let warm = warm.expect("nonempty support");
    let mut working: Vec<bool> = (0..p).map(|k| allowed[k] && warm[k] != 0.0).collect();
    let mut start = warm.to_vec();
    let mut sweeps = 0;
    let mut trace = Vec::new();
    loop {
        let budget = SolverOptions {
            max_iter: opts.max_iter - sweeps,
            ..*opts
        };
        let mut sol = solve_masked(x, y, lambda, &budget, Some(&start), &working, record_trace);
        sweeps += sol.sweeps;
        if record_trace {
            if !trace.is_empty() {
                sol.trace.remove(0);
            }
            trace.append(&mut sol.trace);
        }
        sol.sweeps = sweeps;
        let grad = full_gradient(x, y, &sol.beta);
        let mut added = false;
        for k in 0..p {
            if allowed[k] && !working[k] && grad[k].abs() > lambda {
                working[k] = true;
                added = true;
            }
        }
        if !added || !sol.converged || sweeps >= opts.max_iter {
            sol.trace = trace;
            return sol;
        }
        start = sol.beta;
    }
}

/// `X'(g(X beta) - y) / n`.
fn full_gradient<C: Columns + ?Sized>(x: &C, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.n_rows();
    let mut eta = vec![0.0; n];
    x.mul_into(beta, &mut eta);
    let resid: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| sigmoid(e) - yi).collect();
    (0..x.n_cols()).map(|k| dot(x.col(k), &resid) / n as f64).collect()
}

/// The proximal Newton solver with the coordinates where `allowed` is false
/// pinned at zero.
fn solve_masked<C: Columns + ?Sized>(
    x: &C,
    y: &[f64],
    lambda: f64,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
    allowed: &[bool],
    record_trace: bool,
) -> LogisticSolve {
    let n = x.n_rows();
    let p = x.n_cols();
    let inv_n = 1.0 / n as f64;
    // inner solves start loose and tighten with the outer progress;
    // convergence is only declared once they run at the floor
    let inner_floor = 0.1 * opts.tol;
    let mut inner_tol = INNER_TOL_START.max(inner_floor);

    let mut beta = match warm {
        Some(b) => b.to_vec(),
        None => vec![0.0; p],
    };
    for k in 0..p {
        if !allowed[k] {
            beta[k] = 0.0;
        }
    }
    let mut eta = vec![0.0; n];
    x.mul_into(&beta, &mut eta);
    let mut objective = objective_from_eta(&eta, y, &beta, lambda);
    let mut trace = Vec::new();
    if record_trace {
        trace.push(objective);
    }

    let mut w = vec![0.0; n];
    let mut r0 = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut h = vec![0.0; p];
    let mut h_known = vec![false; p];
    let mut trial = beta.clone();
    let mut in_active = vec![false; p];
    let mut active: Vec<usize> = Vec::new();
    let mut cand_eta = vec![0.0; n];
    let mut cand_beta = vec![0.0; p];
    let mut sweeps = 0usize;
    let mut converged = false;

    for _ in 0..MAX_NEWTON_STEPS {
        for i in 0..n {
            let prob = sigmoid(eta[i]);
            w[i] = (prob * (1.0 - prob)).max(WEIGHT_FLOOR);
            r0[i] = y[i] - prob;
        }
        s.copy_from_slice(&r0);
        h_known.iter_mut().for_each(|v| *v = false);
        trial.copy_from_slice(&beta);
        active.clear();
        in_active.iter_mut().for_each(|v| *v = false);
        for k in 0..p {
            if trial[k] != 0.0 {
                active.push(k);
                in_active[k] = true;
            }
        }

        // one coordinate update of the quadratic model; returns |change|
        let update = |k: usize, trial: &mut [f64], s: &mut [f64], h: &mut [f64], h_known: &mut [bool]| -> f64 {
            let xk = x.col(k);
            if !h_known[k] {
                h[k] = inv_n * xk.iter().zip(w.iter()).map(|(&a, &wi)| wi * a * a).sum::<f64>();
                h_known[k] = true;
            }
            if h[k] <= 0.0 {
                return 0.0;
            }
            let old = trial[k];
            let z = h[k] * old + inv_n * dot(xk, s);
            let new = soft_threshold(z, lambda) / h[k];
            if new == old {
                return 0.0;
            }
            let delta = new - old;
            for ((si, &xi), &wi) in s.iter_mut().zip(xk).zip(w.iter()) {
                *si -= wi * xi * delta;
            }
            trial[k] = new;
            delta.abs()
        };

        loop {
            let mut max_change: f64 = 0.0;
            for k in 0..p {
                if !allowed[k] {
                    continue;
                }
                let c = update(k, &mut trial, &mut s, &mut h, &mut h_known);
                if c > 0.0 && !in_active[k] {
                    in_active[k] = true;
                    active.push(k);
                }
                max_change = max_change.max(c);
            }
            sweeps += 1;
            if max_change <= inner_tol || sweeps >= opts.max_iter {
                break;
            }
            loop {
                let mut max_change: f64 = 0.0;
                for idx in 0..active.len() {
                    let k = active[idx];
                    max_change = max_change.max(update(k, &mut trial, &mut s, &mut h, &mut h_known));
                }
                sweeps += 1;
                if max_change <= inner_tol || sweeps >= opts.max_iter {
                    break;
                }
            }
            if sweeps >= opts.max_iter {
                break;
            }
        }

        let step_size = beta.iter().zip(&trial).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if step_size == 0.0 {
            if inner_tol > inner_floor && sweeps < opts.max_iter {
                inner_tol = inner_floor;
                continue;
            }
            converged = sweeps < opts.max_iter;
            break;
        }

        // backtracking on the true objective
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for k in 0..p {
                cand_beta[k] = if t == 1.0 {
                    trial[k]
                } else {
                    beta[k] + t * (trial[k] - beta[k])
                };
            }
            for i in 0..n {
                // model change in eta recovered from the working residual
                cand_eta[i] = eta[i] + t * (r0[i] - s[i]) / w[i];
            }
            let cand_obj = objective_from_eta(&cand_eta, y, &cand_beta, lambda);
            if cand_obj <= objective {
                accepted = true;
                objective = cand_obj;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if inner_tol > inner_floor && sweeps < opts.max_iter {
                inner_tol = inner_floor;
                continue;
            }
            // no decrease available along the Newton direction: stationary up
            // to rounding
            converged = step_size <= opts.tol.sqrt() && sweeps < opts.max_iter;
            break;
        }
        let previous = objective;
        std::mem::swap(&mut beta, &mut cand_beta);
        x.mul_into(&beta, &mut eta);
        objective = objective_from_eta(&eta, y, &beta, lambda);
        if record_trace {
            trace.push(objective);
        }
        if sweeps >= opts.max_iter {
            break;
        }
        if t < 1.0 && inner_tol <= inner_floor && previous - objective <= ROUNDING * previous.abs().max(1.0) {
            // damped step with no measurable decrease: stationary up to
            // rounding, as above
            converged = step_size <= opts.tol.sqrt();
            break;
        }
        if t * step_size <= opts.tol && t == 1.0 {
            if inner_tol <= inner_floor {
                converged = true;
                break;
            }
            inner_tol = inner_floor;
            continue;
        }
        inner_tol = (0.01 * t * step_size).clamp(inner_floor, inner_tol);
    }

    if !converged {
        log::warn!("logistic solver stopped without converging (lambda = {lambda:e}, {sweeps} sweeps)");
    }
    let loss = mean_loss(&eta, y);
    LogisticSolve {
        beta,
        objective,
        loss,
        sweeps,
        converged,
        trace,
    }
}

fn check_inputs(lambda: f64, opts: &SolverOptions) -> Result<()> {
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Fits the l1-penalized logistic model at a single `lambda`.
///
/// Reaching `max_iter` is not an error: the iterate is returned with
/// `converged = false` (see [`FittedModel::require_converged`]).
pub fn fit_sparse_logistic(data: &Dataset, lambda: f64, opts: &SolverOptions) -> Result<FittedModel> {
    check_inputs(lambda, opts)?;
    Ok(solve_logistic(data.x(), data.y_slice(), lambda, opts, None, None, false).into_model(lambda))
}

/// As [`fit_sparse_logistic`], starting from `warm`.
pub fn fit_sparse_logistic_warm(
    data: &Dataset,
    lambda: f64,
    opts: &SolverOptions,
    warm: &[f64],
) -> Result<FittedModel> {
    check_inputs(lambda, opts)?;
    if warm.len() != data.p() {
        return Err(Error::invalid("warm start has wrong length"));
    }
    Ok(solve_logistic(data.x(), data.y_slice(), lambda, opts, Some(warm), None, false).into_model(lambda))
}

/// As [`fit_sparse_logistic`], also returning the objective after every
/// accepted Newton step (first entry: the starting point).
pub fn fit_sparse_logistic_traced(
    data: &Dataset,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<(FittedModel, Vec<f64>)> {
    check_inputs(lambda, opts)?;
    let mut sol = solve_logistic(data.x(), data.y_slice(), lambda, opts, None, None, true);
    let trace = std::mem::take(&mut sol.trace);
    Ok((sol.into_model(lambda), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        let x = array![
            [0.5, -1.2],
            [1.5, 0.3],
            [-0.7, 0.8],
            [-1.1, -0.4],
            [0.9, 1.4],
            [-0.2, -0.9]
        ];
        Dataset::new(x.view(), array![1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_above_lambda_max() {
        let d = toy();
        let lmax = logistic_lambda_max(&d);
        let m = fit_sparse_logistic(&d, lmax * 1.0001, &SolverOptions::default()).unwrap();
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        assert!(m.converged);
        let m = fit_sparse_logistic(&d, lmax * 0.9, &SolverOptions::default()).unwrap();
        assert!(m.coefficients.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn symmetric_two_point_problem_has_nonnegative_slope() {
        let x = array![[-1.3], [1.3]];
        let d = Dataset::new(x.view(), array![0.0, 1.0]).unwrap();
        let m = fit_sparse_logistic(&d, 1e-3, &SolverOptions::default()).unwrap();
        assert!(m.coefficients[0] >= 0.0);
    }

    #[test]
    fn rejects_bad_options() {
        let d = toy();
        assert!(fit_sparse_logistic(&d, -1.0, &SolverOptions::default()).is_err());
        let bad = SolverOptions { tol: 0.0, max_iter: 10 };
        assert!(fit_sparse_logistic(&d, 0.1, &bad).is_err());
    }

    #[test]
    fn iteration_budget_exhaustion_is_flagged() {
        let d = toy();
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 1,
        };
        let m = fit_sparse_logistic(&d, 1e-3, &opts).unwrap();
        assert!(!m.converged);
        assert!(matches!(m.require_converged(), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn excluded_coordinate_stays_zero() {
        let d = toy();
        let s = solve_logistic(
            d.x(),
            d.y_slice(),
            0.01,
            &SolverOptions::default(),
            None,
            Some(0),
            false,
        );
        assert_eq!(s.beta[0], 0.0);
        assert!(s.converged);
    }

    #[test]
    fn objective_matches_direct_formula() {
        let d = toy();
        let beta = [0.4, -0.2];
        let mut direct = 0.0;
        for i in 0..d.n() {
            let e = 0.4 * d.x().get(i, 0) - 0.2 * d.x().get(i, 1);
            let pr = 1.0 / (1.0 + (-e).exp());
            let yi = d.y()[i];
            direct -= yi * pr.ln() + (1.0 - yi) * (1.0 - pr).ln();
        }
        direct = direct / d.n() as f64 + 0.1 * 0.6;
        approx::assert_abs_diff_eq!(logistic_objective(&d, &beta, 0.1), direct, epsilon = 1e-13);
    }
}
