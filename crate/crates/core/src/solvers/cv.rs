use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gram::{gram_lasso, WeightedGram};
use super::lasso::WeightedLassoProblem;
use super::logistic::{held_out_deviance, lambda_max_cols, solve_logistic};
use super::SolverOptions;
use crate::data::{Columns, Dataset, Design};
use crate::error::{Error, Result};

pub const DEFAULT_N_FOLDS: usize = 5;
pub const DEFAULT_GRID_LEN: usize = 30;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;

/// A path fit stops once this fraction of the null deviance is explained;
/// past it the training folds are (nearly) separable and coefficients only
/// grow.
const SATURATION_DEVIANCE_RATIO: f64 = 0.999;

/// Grid values a logistic CV path may go past its best mean score before
/// it stops.
pub const CV_PATIENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    Deviance,
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_folds: usize,
    /// Strictly descending, nonnegative.
    pub lambda_grid: Vec<f64>,
    pub scoring: Scoring,
}

impl CvPlan {
    pub fn new(n_folds: usize, lambda_grid: Vec<f64>, scoring: Scoring) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {n_folds}")));
        }
        if lambda_grid.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lambda grid entries must be finite and >= 0"));
        }
        if lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("lambda grid must be strictly descending"));
        }
        Ok(CvPlan {
            n_folds,
            lambda_grid,
            scoring,
        })
    }

    fn check_samples(&self, n: usize) -> Result<()> {
        if self.n_folds > n {
            return Err(Error::invalid(format!(
                "{} folds requested for {n} samples",
                self.n_folds
            )));
        }
        Ok(())
    }
}

/// `len` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn log_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let lo = ratio.ln();
    (0..len)
        .map(|i| lambda_max * (lo * i as f64 / (len - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub best_lambda: f64,
    pub best_index: usize,
    /// `(lambda, mean held-out score)` for every grid value fitted on all
    /// folds.
    pub curve: Vec<(f64, f64)>,
}

impl CvCurve {
    /// Minimum mean score; ties go to the earlier, i.e. larger, lambda.
    fn from_scores(grid: &[f64], scores: Vec<f64>) -> Self {
        let mut best_index = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < scores[best_index] {
                best_index = i;
            }
        }
        CvCurve {
            best_lambda: grid[best_index],
            best_index,
            curve: grid.iter().copied().zip(scores).collect(),
        }
    }
}

/// Stratified fold labels: each class is shuffled separately (class 0
/// first, both with the same ChaCha8 stream seeded by `seed`) and dealt
/// round-robin, class 1 continuing where class 0 stopped.
pub fn stratified_folds(y: &[f64], n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 || n_folds > y.len() {
        return Err(Error::invalid(format!(
            "cannot split {} samples into {n_folds} folds",
            y.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut zeros: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0.0).collect();
    let mut ones: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 0.0).collect();
    zeros.shuffle(&mut rng);
    ones.shuffle(&mut rng);
    let mut folds = vec![0; y.len()];
    for (pos, &i) in zeros.iter().chain(ones.iter()).enumerate() {
        folds[i] = pos % n_folds;
    }
    Ok(folds)
}

/// Fold labels from one shuffled permutation dealt round-robin.
pub fn random_folds(n: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut folds = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        folds[i] = pos % n_folds;
    }
    folds
}

fn split_rows(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &f) in folds.iter().enumerate() {
        if f == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

pub enum CvTarget<'a> {
    Logistic(&'a Dataset),
    WeightedLasso(&'a WeightedLassoProblem),
}

/// K-fold cross-validation over `plan.lambda_grid`.
///
/// Logistic fits use stratified folds and mean held-out deviance; weighted
/// lasso fits use random folds and mean held-out weighted squared error.
pub fn cross_validate(target: CvTarget<'_>, plan: &CvPlan, seed: u64, opts: &SolverOptions) -> Result<CvCurve> {
    opts.validate()?;
    match target {
        CvTarget::Logistic(data) => {
            if plan.scoring != Scoring::Deviance {
                return Err(Error::invalid("logistic cross-validation scores by deviance"));
            }
            plan.check_samples(data.n())?;
            let folds = stratified_folds(data.y_slice(), plan.n_folds, seed)?;
            let cv = LogisticCv::run(data, folds, plan.n_folds, plan.lambda_grid.clone(), opts)?;
            Ok(cv.curve)
        }
        CvTarget::WeightedLasso(problem) => {
            if plan.scoring != Scoring::SquaredError {
                return Err(Error::invalid(
                    "weighted lasso cross-validation scores by squared error",
                ));
            }
            plan.check_samples(problem.n())?;
            problem.check_weights()?;
            let q = problem.n_predictors();
            let mut cols: Vec<Vec<f64>> = (0..q).map(|k| problem.predictors().col(k).to_vec()).collect();
            cols.push(problem.targets().to_vec());
            let z = Design::from_columns(problem.n(), &cols);
            let folds = random_folds(problem.n(), plan.n_folds, seed);
            let cv = GramCv::new(&z, problem.weights(), &folds, plan.n_folds);
            Ok(cv.cross_validate(q, &plan.lambda_grid, opts))
        }
    }
}

/// Logistic lasso paths on every training fold, advanced through the grid
/// in lockstep and warm-started along it.
///
/// The paths stop after the first grid value at which some fold saturates,
/// or once the mean held-out deviance has gone `CV_PATIENCE` grid values
/// without improving on its minimum. `seeds[f][i]`, when present, replaces
/// the warm start of fold `f` at grid index `i`.
fn lockstep_paths(
    train: &[Dataset],
    test: &[Dataset],
    grid: &[f64],
    opts: &SolverOptions,
    excluded: Option<usize>,
    seeds: Option<&[Vec<Vec<f64>>]>,
) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let k = train.len();
    let mut paths: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
    let mut scores = Vec::new();
    let mut best = 0;
    for (i, &lambda) in grid.iter().enumerate() {
        let step: Vec<(Vec<f64>, bool, f64)> = (0..k)
            .into_par_iter()
            .map(|f| {
                let start = seeds
                    .and_then(|s| s[f].get(i))
                    .or_else(|| paths[f].last())
                    .map(Vec::as_slice);
                let sol = solve_logistic(train[f].x(), train[f].y_slice(), lambda, opts, start, excluded, false);
                let saturated = sol.deviance_ratio() >= SATURATION_DEVIANCE_RATIO;
                let score = held_out_deviance(test[f].x(), test[f].y_slice(), &sol.beta);
                (sol.beta, saturated, score)
            })
            .collect();
        let mut any_saturated = false;
        let mut total = 0.0;
        for (f, (beta, saturated, score)) in step.into_iter().enumerate() {
            paths[f].push(beta);
            any_saturated |= saturated;
            total += score;
        }
        scores.push(total / k as f64);
        if scores[i] < scores[best] {
            best = i;
        }
        if any_saturated || i - best >= CV_PATIENCE {
            break;
        }
    }
    (paths, scores)
}

/// Cross-validated logistic lasso that keeps its folds and per-fold paths
/// so related fits (e.g. on `X_{-j}`) can reuse them.
#[derive(Debug, Clone)]
pub(crate) struct LogisticCv {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    pub grid: Vec<f64>,
    pub paths: Vec<Vec<Vec<f64>>>,
    pub curve: CvCurve,
}

impl LogisticCv {
    pub fn run(
        data: &Dataset,
        folds: Vec<usize>,
        n_folds: usize,
        grid: Vec<f64>,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let mut train = Vec::with_capacity(n_folds);
        let mut test = Vec::with_capacity(n_folds);
        for f in 0..n_folds {
            let (tr, te) = split_rows(&folds, f);
            let te_data = data.select_rows(&te);
            let (zeros, ones) = te_data.class_counts();
            if zeros == 0 || ones == 0 {
                return Err(Error::invalid(format!(
                    "fold {f} holds a single class; deviance scoring needs both"
                )));
            }
            train.push(data.select_rows(&tr));
            test.push(te_data);
        }
        let (paths, scores) = lockstep_paths(&train, &test, &grid, opts, None, None);
        let curve = CvCurve::from_scores(&grid[..scores.len()], scores);
        Ok(LogisticCv {
            train,
            test,
            grid,
            paths,
            curve,
        })
    }

    /// Cross-validation of the model on `X_{-j}` over the same folds and
    /// grid, warm-started from the stored paths.
    pub fn rerun_excluding(&self, j: usize, opts: &SolverOptions) -> CvCurve {
        let seeds: Vec<Vec<Vec<f64>>> = self
            .paths
            .iter()
            .map(|path| {
                path.iter()
                    .map(|b| {
                        let mut b = b.clone();
                        b[j] = 0.0;
                        b
                    })
                    .collect()
            })
            .collect();
        let (_, scores) = lockstep_paths(&self.train, &self.test, &self.grid, opts, Some(j), Some(&seeds));
        CvCurve::from_scores(&self.grid[..scores.len()], scores)
    }
}

/// Cross-validation machinery for weighted lasso distillations of the
/// columns of one matrix under one weight vector: Gram matrices of the full
/// sample and of every train/test split, built once and shared by all
/// target columns.
#[derive(Debug, Clone)]
pub(crate) struct GramCv {
    pub full: WeightedGram,
    pub train: Vec<WeightedGram>,
    pub test: Vec<WeightedGram>,
}

impl GramCv {
    pub fn new(z: &Design, weights: &[f64], folds: &[usize], n_folds: usize) -> Self {
        let full = WeightedGram::new(z, weights);
        let test: Vec<WeightedGram> = (0..n_folds)
            .into_par_iter()
            .map(|f| {
                let (_, te) = split_rows(folds, f);
                WeightedGram::from_rows(z, weights, &te)
            })
            .collect();
        let train = test.iter().map(|t| WeightedGram::complement(&full, t)).collect();
        GramCv { full, train, test }
    }

    pub fn default_grid(&self, target: usize) -> Vec<f64> {
        log_grid(self.full.lambda_max(target), DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO)
    }

    /// Mean held-out weighted MSE along `grid`, with every fold warm-started
    /// along the path. Stops early once the mean score has gone
    /// `CV_PATIENCE` grid values without improving on its minimum.
    pub fn cross_validate(&self, target: usize, grid: &[f64], opts: &SolverOptions) -> CvCurve {
        let q = self.full.dim();
        let mut betas = vec![vec![0.0; q]; self.train.len()];
        let mut scores = Vec::new();
        let mut best = 0;
        for (i, &lambda) in grid.iter().enumerate() {
            let mut total = 0.0;
            for ((tr, te), beta) in self.train.iter().zip(&self.test).zip(betas.iter_mut()) {
                gram_lasso(tr, target, lambda, beta, opts);
                total += te.weighted_mse(target, beta);
            }
            scores.push(total / self.train.len() as f64);
            if scores[i] < scores[best] {
                best = i;
            }
            if i - best >= CV_PATIENCE {
                break;
            }
        }
        CvCurve::from_scores(&grid[..scores.len()], scores)
    }

    /// Full-sample fit at `grid[index]`, following the path from `grid[0]`.
    pub fn fit_on_path(&self, target: usize, grid: &[f64], index: usize, opts: &SolverOptions) -> Vec<f64> {
        let mut beta = vec![0.0; self.full.dim()];
        for &lambda in &grid[..=index] {
            gram_lasso(&self.full, target, lambda, &mut beta, opts);
        }
        beta
    }
}

/// Runs the full-data logistic path down to `grid[index]`.
pub(crate) fn logistic_fit_on_path<C: Columns + ?Sized>(
    x: &C,
    y: &[f64],
    grid: &[f64],
    index: usize,
    opts: &SolverOptions,
    excluded: Option<usize>,
) -> super::LogisticSolve {
    let mut warm: Option<Vec<f64>> = None;
    let mut last = None;
    for &lambda in &grid[..=index] {
        let sol = solve_logistic(x, y, lambda, opts, warm.as_deref(), excluded, false);
        warm = Some(sol.beta.clone());
        last = Some(sol);
    }
    last.expect("grid prefix is nonempty")
}

/// Default logistic grid for `data`, optionally ignoring one column.
pub(crate) fn logistic_default_grid(data: &Dataset, excluded: Option<usize>) -> Vec<f64> {
    let lmax = lambda_max_cols(data.x(), data.y_slice(), excluded);
    log_grid(lmax, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_validation() {
        assert!(CvPlan::new(1, vec![1.0], Scoring::Deviance).is_err());
        assert!(CvPlan::new(2, vec![], Scoring::Deviance).is_err());
        assert!(CvPlan::new(2, vec![1.0, 1.0], Scoring::Deviance).is_err());
        assert!(CvPlan::new(2, vec![1.0, 0.5], Scoring::Deviance).is_ok());
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(2.0, 30, 1e-3);
        assert_eq!(g.len(), 30);
        assert!((g[0] - 2.0).abs() < 1e-15);
        assert!((g[29] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let y: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let folds = stratified_folds(&y, 4, 11).unwrap();
        for f in 0..4 {
            let members: Vec<usize> = (0..40).filter(|&i| folds[i] == f).collect();
            assert_eq!(members.len(), 10);
            let ones = members.iter().filter(|&&i| y[i] == 1.0).count();
            assert!((3..=4).contains(&ones));
        }
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        let c = CvCurve::from_scores(&[3.0, 2.0, 1.0], vec![0.5, 0.4, 0.4]);
        assert_eq!(c.best_lambda, 2.0);
        assert_eq!(c.best_index, 1);
    }
}
