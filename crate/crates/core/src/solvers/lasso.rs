use ndarray::{Array1, Array2};

use super::{dot, soft_threshold, SolverOptions};
use crate::data::{Columns, Design};
use crate::error::{Error, Result};

/// Weighted lasso `(1/n) sum_i w_i (t_i - P_i b)^2 + lambda_dx |b|_1`.
#[derive(Debug, Clone)]
pub struct WeightedLassoProblem {
    targets: Vec<f64>,
    predictors: Design,
    weights: Vec<f64>,
    lambda_dx: f64,
}

impl WeightedLassoProblem {
    /// Weights must lie in `[0, 0.25]`, the range of the logistic curvature.
    pub fn new(targets: Array1<f64>, predictors: Array2<f64>, weights: Array1<f64>, lambda_dx: f64) -> Result<Self> {
        Self::build(
            targets.to_vec(),
            Design::new(predictors.view()),
            weights.to_vec(),
            lambda_dx,
            0.25,
        )
    }

    /// Same objective with arbitrary nonnegative weights (e.g. unit weights
    /// for a plain lasso).
    pub fn with_unbounded_weights(
        targets: Array1<f64>,
        predictors: Array2<f64>,
        weights: Array1<f64>,
        lambda_dx: f64,
    ) -> Result<Self> {
        Self::build(
            targets.to_vec(),
            Design::new(predictors.view()),
            weights.to_vec(),
            lambda_dx,
            f64::INFINITY,
        )
    }

    pub(crate) fn build(
        targets: Vec<f64>,
        predictors: Design,
        weights: Vec<f64>,
        lambda_dx: f64,
        max_weight: f64,
    ) -> Result<Self> {
        let n = targets.len();
        if predictors.n_rows() != n || weights.len() != n {
            return Err(Error::invalid(format!(
                "inconsistent dimensions: {} targets, {} predictor rows, {} weights",
                n,
                predictors.n_rows(),
                weights.len()
            )));
        }
        if n == 0 {
            return Err(Error::invalid("empty problem"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && **w <= max_weight)) {
            return Err(Error::invalid(format!("weight {w} outside [0, {max_weight}]")));
        }
        if !(lambda_dx >= 0.0) || !lambda_dx.is_finite() {
            return Err(Error::invalid(format!(
                "lambda_dx must be finite and >= 0, got {lambda_dx}"
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) || predictors.view().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in weighted lasso inputs"));
        }
        Ok(WeightedLassoProblem {
            targets,
            predictors,
            weights,
            lambda_dx,
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.n_cols()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn predictors(&self) -> &Design {
        &self.predictors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda_dx(&self) -> f64 {
        self.lambda_dx
    }

    pub fn with_lambda(&self, lambda_dx: f64) -> Self {
        WeightedLassoProblem {
            lambda_dx,
            ..self.clone()
        }
    }

    /// `max_k |(2/n) sum_i w_i P_ik t_i|`; at or above this the zero vector
    /// is optimal.
    pub fn lambda_max(&self) -> f64 {
        let wt: Vec<f64> = self.weights.iter().zip(&self.targets).map(|(w, t)| w * t).collect();
        let scale = 2.0 / self.n() as f64;
        (0..self.n_predictors())
            .map(|k| (scale * dot(self.predictors.col(k), &wt)).abs())
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        let r = self.residual(beta);
        let n = self.n() as f64;
        r.iter().zip(&self.weights).map(|(r, w)| w * r * r).sum::<f64>() / n
            + self.lambda_dx * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut fit = vec![0.0; self.n()];
        self.predictors.mul_into(beta, &mut fit);
        self.targets.iter().zip(&fit).map(|(t, f)| t - f).collect()
    }

    pub(crate) fn check_weights(&self) -> Result<()> {
        if self.weights.iter().all(|&w| w < 1e-12) {
            return Err(Error::DegenerateWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Array1<f64>,
    pub n_iterations: usize,
    pub converged: bool,
}

/// Largest violation of the stationarity conditions
/// `(2/n) P' W r = lambda sign(b_k)` on the support and
/// `|(2/n) P_k' W r| <= lambda` off it.
pub fn weighted_lasso_kkt_residual(problem: &WeightedLassoProblem, beta: &[f64]) -> f64 {
    let r = problem.residual(beta);
    let wr: Vec<f64> = r.iter().zip(problem.weights()).map(|(r, w)| r * w).collect();
    let scale = 2.0 / problem.n() as f64;
    let lambda = problem.lambda_dx();
    (0..problem.n_predictors())
        .map(|k| {
            let c = scale * dot(problem.predictors().col(k), &wr);
            if beta[k] != 0.0 {
                (c - lambda * beta[k].signum()).abs()
            } else {
                (c.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent with an active-set inner loop, operating on
/// the residual vector directly (one pass over `n` per coordinate).
pub fn fit_weighted_lasso(problem: &WeightedLassoProblem, opts: &SolverOptions) -> Result<LassoFit> {
    opts.validate()?;
    problem.check_weights()?;
    let n = problem.n();
    let q = problem.n_predictors();
    let scale = 2.0 / n as f64;
    let lambda = problem.lambda_dx;
    let w = &problem.weights;

    let mut beta = vec![0.0; q];
    let mut r = problem.targets.clone();
    let h: Vec<f64> = (0..q)
        .map(|k| {
            scale
                * problem
                    .predictors
                    .col(k)
                    .iter()
                    .zip(w)
                    .map(|(x, w)| w * x * x)
                    .sum::<f64>()
        })
        .collect();
    let mut wx = vec![0.0; n];
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; q];
    let mut sweeps = 0usize;
    let mut converged = false;

    let update = |k: usize, beta: &mut [f64], r: &mut [f64], wx: &mut [f64]| -> f64 {
        if h[k] <= 0.0 {
            return 0.0;
        }
        let xk = problem.predictors.col(k);
        for ((o, &x), &wi) in wx.iter_mut().zip(xk).zip(w) {
            *o = x * wi;
        }
        let old = beta[k];
        let z = scale * dot(wx, r) + h[k] * old;
        let new = soft_threshold(z, lambda) / h[k];
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        for (ri, &x) in r.iter_mut().zip(xk) {
            *ri -= x * delta;
        }
        beta[k] = new;
        delta.abs()
    };

    while sweeps < opts.max_iter {
        let mut max_change: f64 = 0.0;
        for k in 0..q {
            let c = update(k, &mut beta, &mut r, &mut wx);
            if c > 0.0 && !in_active[k] {
                in_active[k] = true;
                active.push(k);
            }
            max_change = max_change.max(c);
        }
        sweeps += 1;
        if max_change <= opts.tol {
            converged = true;
            break;
        }
        while sweeps < opts.max_iter {
            let mut max_change: f64 = 0.0;
            for &k in &active {
                max_change = max_change.max(update(k, &mut beta, &mut r, &mut wx));
            }
            sweeps += 1;
            if max_change <= opts.tol {
                break;
            }
        }
    }
    if !converged {
        log::warn!("weighted lasso stopped without converging after {sweeps} sweeps");
    }
    Ok(LassoFit {
        coefficients: Array1::from(beta),
        n_iterations: sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_weights_outside_logistic_range() {
        let p = array![[1.0], [2.0]];
        let err = WeightedLassoProblem::new(array![1.0, 2.0], p, array![0.3, 0.1], 0.1);
        assert!(err.is_err());
    }

    #[test]
    fn all_zero_weights_are_degenerate() {
        let p = array![[1.0], [2.0]];
        let prob = WeightedLassoProblem::new(array![1.0, 2.0], p, array![0.0, 0.0], 0.1).unwrap();
        assert_eq!(
            fit_weighted_lasso(&prob, &SolverOptions::default()).unwrap_err(),
            Error::DegenerateWeights
        );
    }

    #[test]
    fn single_active_sample_is_interpolated() {
        // only sample 1 carries weight; with a tiny penalty its target is fit
        let p = array![[0.3, 1.0], [2.0, -1.0], [0.5, 0.5]];
        let t = array![4.0, 3.0, -2.0];
        let prob = WeightedLassoProblem::new(t, p, array![0.0, 0.25, 0.0], 1e-9).unwrap();
        let fit = fit_weighted_lasso(&prob, &SolverOptions::default()).unwrap();
        let r = prob.residual(fit.coefficients.as_slice().unwrap());
        assert!(r[1].abs() < 1e-6, "residual {}", r[1]);
    }

    #[test]
    fn zero_at_lambda_max() {
        let p = array![[0.3, 1.0], [2.0, -1.0], [0.5, 0.5], [-1.0, 0.2]];
        let t = array![1.0, 3.0, -2.0, 0.4];
        let prob = WeightedLassoProblem::new(t, p, array![0.2, 0.25, 0.1, 0.05], 0.0).unwrap();
        let lmax = prob.lambda_max();
        let fit = fit_weighted_lasso(&prob.with_lambda(lmax), &SolverOptions::default()).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let fit = fit_weighted_lasso(&prob.with_lambda(0.8 * lmax), &SolverOptions::default()).unwrap();
        assert!(fit.coefficients.iter().any(|&b| b != 0.0));
    }
}
