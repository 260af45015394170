//! The CRT-logit procedure: a cross-validated sparse logistic fit, screening
//! on its support, and for every retained variable a curvature-weighted
//! x-distillation, the decorrelated score statistic normalised by the
//! empirical partial Fisher information, and a two-sided normal p-value.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Columns, Dataset, Design};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::solvers::{
    fit_weighted_lasso, logistic_default_grid, logistic_fit_on_path, random_folds, sigmoid_weight, solve_logistic,
    stratified_folds, CvCurve, FittedModel, GramCv, LogisticCv, SolverOptions, WeightedGram, WeightedLassoProblem,
    DEFAULT_N_FOLDS,
};
use crate::stats::{normal_sf, sigmoid};

/// Partial Fisher information at or below this is treated as zero.
pub const FISHER_INFO_EPS: f64 = 1e-10;

/// How a penalty level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaStrategy {
    /// K-fold cross-validation over the default grid.
    Cv,
    Fixed(f64),
    /// `sqrt(log p / n)`.
    Universal,
}

impl LambdaStrategy {
    fn validate(&self, what: &str) -> Result<()> {
        if let LambdaStrategy::Fixed(l) = self {
            if !(*l >= 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!("{what} must be finite and >= 0, got {l}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for LambdaStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaStrategy::Cv => f.write_str("cv"),
            LambdaStrategy::Universal => f.write_str("universal"),
            LambdaStrategy::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl FromStr for LambdaStrategy {
    type Err = Error;

    /// `cv`, `universal`, or a nonnegative number.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cv" => Ok(LambdaStrategy::Cv),
            "universal" => Ok(LambdaStrategy::Universal),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::invalid(format!("expected cv, universal or a number, got '{s}'")))?;
                let strategy = LambdaStrategy::Fixed(v);
                strategy.validate("lambda")?;
                Ok(strategy)
            }
        }
    }
}

/// `sqrt(log p / n)`.
pub fn universal_lambda(n: usize, p: usize) -> f64 {
    ((p as f64).ln().max(0.0) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    /// Penalty of the full logistic fit.
    pub lambda: LambdaStrategy,
    /// Penalty of every x-distillation (chosen per variable under `Cv`).
    pub lambda_dx: LambdaStrategy,
    pub screening: bool,
    pub n_folds: usize,
    /// dCRT only: choose the penalty of each `X_{-j}` logistic fit by its own
    /// cross-validation instead of reusing the full model's penalty.
    pub y_distillation_cv: bool,
    pub solver: SolverOptions,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            lambda: LambdaStrategy::Cv,
            lambda_dx: LambdaStrategy::Cv,
            screening: true,
            n_folds: DEFAULT_N_FOLDS,
            y_distillation_cv: false,
            solver: SolverOptions::default(),
        }
    }
}

impl InferenceConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        self.lambda.validate("lambda")?;
        self.lambda_dx.validate("lambda_dx")?;
        if self.n_folds < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {}", self.n_folds)));
        }
        self.solver.validate()
    }
}

/// Per-variable outcome of a test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableResult {
    pub index: usize,
    pub screened_in: bool,
    pub statistic: Option<f64>,
    pub fisher_info: Option<f64>,
    pub p_value: f64,
    /// Penalty used for this variable's x-distillation, when one was run.
    pub lambda_dx: Option<f64>,
    /// Why no statistic could be formed, for screened-in variables.
    pub degenerate: Option<String>,
}

impl VariableResult {
    pub fn screened_out(index: usize) -> Self {
        VariableResult {
            index,
            screened_in: false,
            statistic: None,
            fisher_info: None,
            p_value: 1.0,
            lambda_dx: None,
            degenerate: None,
        }
    }

    pub(crate) fn degenerate(index: usize, lambda_dx: Option<f64>, err: &Error) -> Self {
        VariableResult {
            index,
            screened_in: true,
            statistic: None,
            fisher_info: None,
            p_value: 1.0,
            lambda_dx,
            degenerate: Some(err.to_string()),
        }
    }
}

/// Distillation coefficients for variable `j`, both over `X_{-j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillationPair {
    pub beta_dx: Array1<f64>,
    pub beta_dy: Array1<f64>,
    pub lambda_dx: f64,
    pub variable_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    /// One entry per requested variable, ordered by index.
    pub results: Vec<VariableResult>,
    pub model: FittedModel,
    /// Cross-validation curve of the full fit, when it was cross-validated.
    pub cv_curve: Option<CvCurve>,
}

impl InferenceOutput {
    pub fn p_values(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.p_value).collect()
    }
}

/// Indices with a nonzero fitted coefficient, ascending.
pub fn screening_set(model: &FittedModel) -> Vec<usize> {
    model.support()
}

fn check_index(j: usize, p: usize) -> Result<()> {
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    Ok(())
}

fn check_len(v: &[f64], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::invalid(format!("{what} has length {}, expected {len}", v.len())));
    }
    Ok(())
}

/// Length-`p` vector from a length-`(p-1)` one, with a zero at `j`.
fn insert_zero(v: &[f64], j: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(&v[..j]);
    out.push(0.0);
    out.extend_from_slice(&v[j..]);
    out
}

fn remove_entry(v: &[f64], j: usize) -> Vec<f64> {
    v.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, &b)| b).collect()
}

/// `X beta` for a length-`p` coefficient vector.
fn linear_predictor(x: &Design, beta: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; x.n_rows()];
    x.mul_into(beta, &mut eta);
    eta
}

/// `X_{-j}` as a standalone design.
pub(crate) fn drop_column(x: &Design, j: usize) -> Design {
    let cols: Vec<Vec<f64>> = (0..x.n_cols()).filter(|&k| k != j).map(|k| x.col(k).to_vec()).collect();
    Design::from_columns(x.n_rows(), &cols)
}

/// `beta_hat` without its `j`-th entry.
pub fn distill_y(beta_hat: &[f64], j: usize) -> Result<Array1<f64>> {
    check_index(j, beta_hat.len())?;
    Ok(Array1::from(remove_entry(beta_hat, j)))
}

/// Weighted lasso of `X_{*,j}` on `X_{-j}` with weights
/// `sigmoid_weight(X_i beta_hat)`.
pub fn distill_x(
    data: &Dataset,
    j: usize,
    beta_hat: &[f64],
    lambda_dx: f64,
    opts: &SolverOptions,
) -> Result<Array1<f64>> {
    check_index(j, data.p())?;
    check_len(beta_hat, data.p(), "beta_hat")?;
    let eta = linear_predictor(data.x(), beta_hat);
    let weights: Vec<f64> = eta.iter().map(|&t| sigmoid_weight(t)).collect();
    let problem = WeightedLassoProblem::build(
        data.x().col(j).to_vec(),
        drop_column(data.x(), j),
        weights,
        lambda_dx,
        0.25,
    )?;
    Ok(fit_weighted_lasso(&problem, opts)?.coefficients)
}

/// Column residual `x_j - X_{-j} b` for a length-`p` `b` with `b[j] = 0`.
fn column_residual(x: &Design, j: usize, beta_dx_full: &[f64]) -> Vec<f64> {
    let fit = linear_predictor(x, beta_dx_full);
    x.col(j).iter().zip(&fit).map(|(a, f)| a - f).collect()
}

/// `(1/n) sum_i w_i r_i x_ij`.
fn fisher_info_from(weights: &[f64], resid: &[f64], xj: &[f64], j: usize) -> Result<f64> {
    let n = xj.len() as f64;
    let info = weights
        .iter()
        .zip(resid)
        .zip(xj)
        .map(|((w, r), x)| w * r * x)
        .sum::<f64>()
        / n;
    if !info.is_finite() {
        return Err(Error::NonFinite(format!("partial Fisher information of variable {j}")));
    }
    if info <= FISHER_INFO_EPS {
        return Err(Error::DegenerateFisherInfo { index: j, value: info });
    }
    Ok(info)
}

/// `-n^{-1/2} info^{-1/2} sum_i (y_i - g(eta_i)) r_i`.
fn statistic_from(y: &[f64], eta_minus_j: &[f64], resid: &[f64], info: f64, j: usize) -> Result<f64> {
    let n = y.len() as f64;
    let score: f64 = y
        .iter()
        .zip(eta_minus_j)
        .zip(resid)
        .map(|((&yi, &e), &r)| (yi - sigmoid(e)) * r)
        .sum();
    let t = -score / (n.sqrt() * info.sqrt());
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("statistic of variable {j}")));
    }
    Ok(t)
}

/// Empirical partial Fisher information
/// `(1/n) sum_i sigmoid_weight(X_i beta_hat) (x_ij - X_{i,-j} beta_dx) x_ij`.
pub fn partial_fisher_info(data: &Dataset, j: usize, beta_hat: &[f64], beta_dx: &[f64]) -> Result<f64> {
    check_index(j, data.p())?;
    check_len(beta_hat, data.p(), "beta_hat")?;
    check_len(beta_dx, data.p() - 1, "beta_dx")?;
    let eta = linear_predictor(data.x(), beta_hat);
    let weights: Vec<f64> = eta.iter().map(|&t| sigmoid_weight(t)).collect();
    let resid = column_residual(data.x(), j, &insert_zero(beta_dx, j));
    fisher_info_from(&weights, &resid, data.x().col(j), j)
}

/// Decorrelated score statistic of variable `j`.
pub fn decorrelated_statistic(data: &Dataset, j: usize, pair: &DistillationPair, fisher_info: f64) -> Result<f64> {
    check_index(j, data.p())?;
    let dx = pair.beta_dx.as_slice().expect("contiguous");
    let dy = pair.beta_dy.as_slice().expect("contiguous");
    check_len(dx, data.p() - 1, "beta_dx")?;
    check_len(dy, data.p() - 1, "beta_dy")?;
    if !(fisher_info > FISHER_INFO_EPS) {
        return Err(Error::DegenerateFisherInfo {
            index: j,
            value: fisher_info,
        });
    }
    let resid = column_residual(data.x(), j, &insert_zero(dx, j));
    let eta = linear_predictor(data.x(), &insert_zero(dy, j));
    statistic_from(data.y_slice(), &eta, &resid, fisher_info, j)
}

/// `2 (1 - Phi(|t|))`.
pub fn two_sided_pvalue(t: f64) -> f64 {
    (2.0 * normal_sf(t.abs())).min(1.0)
}

/// Folds actually used for a K-fold split of `data`: at most the size of the
/// smaller class, so every held-out fold sees both classes. `None` when that
/// leaves fewer than two folds.
fn effective_logistic_folds(data: &Dataset, requested: usize) -> Option<usize> {
    let (zeros, ones) = data.class_counts();
    let k = requested.min(zeros.min(ones));
    (k >= 2).then_some(k)
}

/// Full-data logistic fit under a penalty strategy.
pub(crate) struct MainFit {
    pub model: FittedModel,
    pub cv: Option<LogisticCv>,
    /// `X beta_hat`.
    pub eta: Vec<f64>,
}

pub(crate) fn fit_main(
    data: &Dataset,
    strategy: LambdaStrategy,
    n_folds: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<MainFit> {
    let (x, y) = (data.x(), data.y_slice());
    let single = |lambda: f64| solve_logistic(x, y, lambda, opts, None, None, false).into_model(lambda);
    let (model, cv) = match strategy {
        LambdaStrategy::Fixed(l) => (single(l), None),
        LambdaStrategy::Universal => (single(universal_lambda(data.n(), data.p())), None),
        LambdaStrategy::Cv => match effective_logistic_folds(data, n_folds) {
            None => {
                log::warn!("too few samples per class for cross-validation; using the universal penalty");
                (single(universal_lambda(data.n(), data.p())), None)
            }
            Some(k) => {
                if k < n_folds {
                    log::warn!("reducing cross-validation from {n_folds} to {k} folds");
                }
                let folds = stratified_folds(y, k, derive_seed(seed, &[tag::FOLDS]))?;
                let grid = logistic_default_grid(data, None);
                let cv = LogisticCv::run(data, folds, k, grid, opts)?;
                let best = cv.curve.best_index;
                let sol = logistic_fit_on_path(x, y, &cv.grid, best, opts, None);
                (sol.into_model(cv.grid[best]), Some(cv))
            }
        },
    };
    if !model.converged {
        log::warn!("logistic fit at lambda {} did not converge", model.lambda);
    }
    let eta = linear_predictor(x, model.coefficients.as_slice().expect("contiguous"));
    Ok(MainFit { model, cv, eta })
}

/// Fits the full-data logistic lasso the way [`crt_logit`] does.
pub fn fit_full_model(
    data: &Dataset,
    strategy: LambdaStrategy,
    n_folds: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<FittedModel> {
    strategy.validate("lambda")?;
    Ok(fit_main(data, strategy, n_folds, seed, opts)?.model)
}

/// Shared state for the distillation of many columns of one design under
/// one weight vector: Gram matrices for the full sample and, when the
/// penalty is cross-validated, for every fold.
pub(crate) enum Distiller {
    Cv(GramCv),
    Fixed(WeightedGram, f64),
}

impl Distiller {
    pub fn new(x: &Design, weights: &[f64], strategy: LambdaStrategy, n_folds: usize, seed: u64) -> Self {
        let (n, p) = (x.n_rows(), x.n_cols());
        match strategy {
            LambdaStrategy::Cv => {
                let k = n_folds.min(n);
                let folds = random_folds(n, k, derive_seed(seed, &[tag::FOLDS, 1]));
                Distiller::Cv(GramCv::new(x, weights, &folds, k))
            }
            LambdaStrategy::Fixed(l) => Distiller::Fixed(WeightedGram::new(x, weights), l),
            LambdaStrategy::Universal => Distiller::Fixed(WeightedGram::new(x, weights), universal_lambda(n, p)),
        }
    }

    /// Coefficients of column `j` on the others (length `p`, zero at `j`)
    /// and the penalty used.
    pub fn distill(&self, j: usize, opts: &SolverOptions) -> (Vec<f64>, f64) {
        match self {
            Distiller::Cv(cv) => {
                let grid = cv.default_grid(j);
                let curve = cv.cross_validate(j, &grid, opts);
                (cv.fit_on_path(j, &grid, curve.best_index, opts), curve.best_lambda)
            }
            Distiller::Fixed(gram, l) => {
                let mut beta = vec![0.0; gram.dim()];
                crate::solvers::gram_lasso(gram, j, *l, &mut beta, opts);
                (beta, *l)
            }
        }
    }
}

/// Which variables a run reports on.
fn targets(p: usize, subset: Option<&[usize]>) -> Result<Vec<usize>> {
    match subset {
        None => Ok((0..p).collect()),
        Some(s) => {
            let mut v = s.to_vec();
            v.sort_unstable();
            v.dedup();
            if let Some(&bad) = v.iter().find(|&&j| j >= p) {
                return Err(Error::IndexOutOfRange { index: bad, len: p });
            }
            Ok(v)
        }
    }
}

/// Runs the CRT-logit test on every variable.
///
/// Variables outside the screening set (when screening is on) get a p-value
/// of 1. A variable whose statistic is undefined (degenerate Fisher information,
/// saturated weights) is reported with a p-value of 1 and a reason instead
/// of failing the run.
pub fn crt_logit(data: &Dataset, config: &InferenceConfig, seed: u64) -> Result<InferenceOutput> {
    crt_logit_subset(data, config, seed, None)
}

/// As [`crt_logit`], reporting only on the variables in `subset` (all when
/// `None`). Statistics do not depend on which other variables are requested.
pub fn crt_logit_subset(
    data: &Dataset,
    config: &InferenceConfig,
    seed: u64,
    subset: Option<&[usize]>,
) -> Result<InferenceOutput> {
    config.validate()?;
    let wanted = targets(data.p(), subset)?;
    let main = fit_main(data, config.lambda, config.n_folds, seed, &config.solver)?;
    let results = crt_logit_given_fit(data, &main.model, &main.eta, config, seed, &wanted);
    Ok(InferenceOutput {
        results,
        model: main.model,
        cv_curve: main.cv.map(|cv| cv.curve),
    })
}

/// CRT-logit for several x-distillation penalties sharing one full fit.
/// Returns one result vector (over all variables) per strategy.
pub fn crt_logit_lambda_dx_sweep(
    data: &Dataset,
    config: &InferenceConfig,
    seed: u64,
    lambda_dx: &[LambdaStrategy],
) -> Result<(FittedModel, Vec<Vec<VariableResult>>)> {
    config.validate()?;
    let main = fit_main(data, config.lambda, config.n_folds, seed, &config.solver)?;
    let wanted: Vec<usize> = (0..data.p()).collect();
    let mut out = Vec::with_capacity(lambda_dx.len());
    for &strategy in lambda_dx {
        strategy.validate("lambda_dx")?;
        let cfg = InferenceConfig {
            lambda_dx: strategy,
            ..config.clone()
        };
        out.push(crt_logit_given_fit(data, &main.model, &main.eta, &cfg, seed, &wanted));
    }
    Ok((main.model, out))
}

pub(crate) fn crt_logit_given_fit(
    data: &Dataset,
    model: &FittedModel,
    eta: &[f64],
    config: &InferenceConfig,
    seed: u64,
    wanted: &[usize],
) -> Vec<VariableResult> {
    let beta_hat = model.coefficients.as_slice().expect("contiguous");
    let tested: Vec<usize> = wanted
        .iter()
        .copied()
        .filter(|&j| !config.screening || beta_hat[j] != 0.0)
        .collect();
    let weights: Vec<f64> = eta.iter().map(|&t| sigmoid_weight(t)).collect();
    if weights.iter().all(|&w| w < 1e-12) {
        log::warn!("all curvature weights vanish; no statistic can be formed");
        return wanted
            .iter()
            .map(|&j| {
                if tested.contains(&j) {
                    VariableResult::degenerate(j, None, &Error::DegenerateWeights)
                } else {
                    VariableResult::screened_out(j)
                }
            })
            .collect();
    }
    let distiller = if tested.is_empty() {
        None
    } else {
        Some(Distiller::new(
            data.x(),
            &weights,
            config.lambda_dx,
            config.n_folds,
            seed,
        ))
    };
    let computed: Vec<VariableResult> = tested
        .par_iter()
        .map(|&j| {
            let distiller = distiller.as_ref().expect("built when something is tested");
            let (beta_dx, lambda_dx) = distiller.distill(j, &config.solver);
            let x = data.x();
            let xj = x.col(j);
            let resid = column_residual(x, j, &beta_dx);
            let outcome = fisher_info_from(&weights, &resid, xj, j).and_then(|info| {
                let eta_minus_j: Vec<f64> = eta.iter().zip(xj).map(|(e, a)| e - a * beta_hat[j]).collect();
                statistic_from(data.y_slice(), &eta_minus_j, &resid, info, j).map(|t| (t, info))
            });
            match outcome {
                Ok((t, info)) => VariableResult {
                    index: j,
                    screened_in: true,
                    statistic: Some(t),
                    fisher_info: Some(info),
                    p_value: two_sided_pvalue(t),
                    lambda_dx: Some(lambda_dx),
                    degenerate: None,
                },
                Err(e) => VariableResult::degenerate(j, Some(lambda_dx), &e),
            }
        })
        .collect();
    merge_results(wanted, computed)
}

/// Interleaves computed results with screened-out placeholders, by index.
pub(crate) fn merge_results(wanted: &[usize], computed: Vec<VariableResult>) -> Vec<VariableResult> {
    let mut computed = computed.into_iter().peekable();
    wanted
        .iter()
        .map(|&j| match computed.peek() {
            Some(r) if r.index == j => computed.next().expect("peeked"),
            _ => VariableResult::screened_out(j),
        })
        .collect()
}
