//! Convex solvers for the l1-penalized problems used throughout the crate.
//!
//! * [`fit_sparse_logistic`]: `-(1/n) sum_i [y_i x_i'b - log(1 + e^{x_i'b})] + lambda |b|_1`.
//!   There is no intercept; designs are expected to be centred.
//! * [`fit_weighted_lasso`]: `(1/n) sum_i w_i (t_i - P_i b)^2 + lambda |b|_1`
//!   (no factor 1/2, so the stationarity conditions carry a factor 2).
//! * [`cross_validate`]: K-fold selection of the penalty level.

mod cv;
mod gram;
mod lasso;
mod logistic;

pub use cv::{
    cross_validate, log_grid, random_folds, stratified_folds, CvCurve, CvPlan, CvTarget, Scoring, DEFAULT_GRID_LEN,
    DEFAULT_GRID_RATIO, DEFAULT_N_FOLDS,
};
pub(crate) use cv::{logistic_default_grid, logistic_fit_on_path, GramCv, LogisticCv};
pub use gram::{gram_lasso, WeightedGram};
pub use lasso::{fit_weighted_lasso, weighted_lasso_kkt_residual, LassoFit, WeightedLassoProblem};
pub use logistic::{
    fit_sparse_logistic, fit_sparse_logistic_traced, fit_sparse_logistic_warm, logistic_gradient, logistic_lambda_max,
    logistic_objective, FittedModel,
};
pub(crate) use logistic::{held_out_deviance, solve_logistic, LogisticSolve};

pub use crate::stats::sigmoid_weight;

/// Coordinate-descent stopping rule shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the largest coordinate update of a full sweep is below this.
    pub tol: f64,
    /// Maximum number of coordinate sweeps.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

impl SolverOptions {
    pub(crate) fn validate(&self) -> crate::Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(crate::Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(crate::Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise without reassociating
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}
