//! Comparison tests: the distilled CRT with a linear residual statistic, the
//! original resampling CRT, and the holdout randomization test.
//!
//! All of them report [`VariableResult`]s so they feed the multiple-testing
//! code exactly like CRT-logit does.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Columns, Dataset, Design, ReplacedColumn};
use crate::error::{Error, Result};
use crate::inference::{
    drop_column, fit_main, merge_results, two_sided_pvalue, Distiller, InferenceConfig, InferenceOutput, MainFit,
    VariableResult,
};
use crate::rng::{stream, tag};
use crate::solvers::{fit_weighted_lasso, held_out_deviance, solve_logistic, SolverOptions, WeightedLassoProblem};

/// Residual norms at or below this make the dCRT statistic undefined.
pub const RESIDUAL_NORM_EPS: f64 = 1e-12;

/// `sqrt(n) <y - X_{-j} b_y, x_j - X_{-j} b_x> / (|y - X_{-j} b_y| |x_j - X_{-j} b_x|)`.
///
/// The y-residual is linear in `X_{-j} b_y` even though `b_y` comes from a
/// logistic fit; that is the statistic as defined for the distilled CRT.
pub fn dcrt_statistic(data: &Dataset, j: usize, beta_dy: &[f64], beta_dx: &[f64]) -> Result<f64> {
    let p = data.p();
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    if beta_dy.len() != p - 1 || beta_dx.len() != p - 1 {
        return Err(Error::invalid(format!(
            "distillation vectors must have length {}, got {} and {}",
            p - 1,
            beta_dy.len(),
            beta_dx.len()
        )));
    }
    let widen = |v: &[f64]| {
        let mut out = v.to_vec();
        out.insert(j, 0.0);
        out
    };
    statistic_full(data, j, &widen(beta_dy), &widen(beta_dx))
}

/// As [`dcrt_statistic`] with length-`p` vectors that are zero at `j`.
fn statistic_full(data: &Dataset, j: usize, dy: &[f64], dx: &[f64]) -> Result<f64> {
    let x = data.x();
    let n = data.n();
    let mut fy = vec![0.0; n];
    let mut fx = vec![0.0; n];
    x.mul_into(dy, &mut fy);
    x.mul_into(dx, &mut fx);
    let ry: Vec<f64> = data.y_slice().iter().zip(&fy).map(|(a, b)| a - b).collect();
    let rx: Vec<f64> = x.col(j).iter().zip(&fx).map(|(a, b)| a - b).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (ny, nx) = (norm(&ry), norm(&rx));
    if ny <= RESIDUAL_NORM_EPS || nx <= RESIDUAL_NORM_EPS {
        return Err(Error::DegenerateResidual { index: j });
    }
    let inner: f64 = ry.iter().zip(&rx).map(|(a, b)| a * b).sum();
    let t = (n as f64).sqrt() * inner / (ny * nx);
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("dCRT statistic of variable {j}")));
    }
    Ok(t)
}

/// Distilled CRT: logistic-lasso y-distillation and plain-lasso
/// x-distillation on `X_{-j}`, with a normal p-value for the residual
/// correlation statistic.
///
/// The x-distillation penalty follows `config.lambda_dx`. The y-distillation
/// reuses the penalty of the full fit unless `config.y_distillation_cv` asks
/// for a cross-validation per variable.
pub fn dcrt(data: &Dataset, config: &InferenceConfig, seed: u64) -> Result<InferenceOutput> {
    dcrt_subset(data, config, seed, None)
}

/// As [`dcrt`], reporting only on `subset` (all variables when `None`).
pub fn dcrt_subset(
    data: &Dataset,
    config: &InferenceConfig,
    seed: u64,
    subset: Option<&[usize]>,
) -> Result<InferenceOutput> {
    config.validate()?;
    let p = data.p();
    let wanted: Vec<usize> = match subset {
        None => (0..p).collect(),
        Some(s) => {
            let mut v = s.to_vec();
            v.sort_unstable();
            v.dedup();
            if let Some(&bad) = v.iter().find(|&&j| j >= p) {
                return Err(Error::IndexOutOfRange { index: bad, len: p });
            }
            v
        }
    };
    let main = fit_main(data, config.lambda, config.n_folds, seed, &config.solver)?;
    let results = dcrt_given_fit(data, &main, config, seed, &wanted);
    Ok(InferenceOutput {
        results,
        model: main.model,
        cv_curve: main.cv.map(|cv| cv.curve),
    })
}

pub(crate) fn dcrt_given_fit(
    data: &Dataset,
    main: &MainFit,
    config: &InferenceConfig,
    seed: u64,
    wanted: &[usize],
) -> Vec<VariableResult> {
    let opts = &config.solver;
    let beta_hat = main.model.coefficients.as_slice().expect("contiguous");
    let tested: Vec<usize> = wanted
        .iter()
        .copied()
        .filter(|&j| !config.screening || beta_hat[j] != 0.0)
        .collect();
    let distiller = if tested.is_empty() {
        None
    } else {
        Some(Distiller::new(
            data.x(),
            &vec![1.0; data.n()],
            config.lambda_dx,
            config.n_folds,
            seed,
        ))
    };
    let (x, y) = (data.x(), data.y_slice());
    let computed: Vec<VariableResult> = tested
        .par_iter()
        .map(|&j| {
            let mut warm = beta_hat.to_vec();
            warm[j] = 0.0;
            let lambda_dy = match &main.cv {
                Some(cv) if config.y_distillation_cv => cv.grid[cv.rerun_excluding(j, opts).best_index],
                _ => main.model.lambda,
            };
            let dy = solve_logistic(x, y, lambda_dy, opts, Some(&warm), Some(j), false).beta;
            let (dx, lambda_dx) = distiller
                .as_ref()
                .expect("built when something is tested")
                .distill(j, opts);
            match statistic_full(data, j, &dy, &dx) {
                Ok(t) => VariableResult {
                    index: j,
                    screened_in: true,
                    statistic: Some(t),
                    fisher_info: None,
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

/// Gaussian model of `x_j` given the other columns: lasso mean and a
/// homoscedastic residual scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSampler {
    pub variable_index: usize,
    /// Coefficients on `X_{-j}` (length `p - 1`).
    pub mean_weights: Array1<f64>,
    /// Root mean square of the lasso residual.
    pub residual_sd: f64,
}

impl ConditionalSampler {
    fn from_full(x: &Design, j: usize, full: &[f64]) -> Self {
        let mean = conditional_mean(x, full);
        let n = x.n_rows() as f64;
        let ss: f64 = x.col(j).iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum();
        let mut weights = full.to_vec();
        weights.remove(j);
        ConditionalSampler {
            variable_index: j,
            mean_weights: Array1::from(weights),
            residual_sd: (ss / n).sqrt(),
        }
    }

    fn full_weights(&self) -> Vec<f64> {
        let mut w = self.mean_weights.to_vec();
        w.insert(self.variable_index, 0.0);
        w
    }

    /// `X_{-j} mean_weights` for the rows of `x` (a design with all `p`
    /// columns; column `j` is ignored).
    pub fn mean(&self, x: &Design) -> Vec<f64> {
        conditional_mean(x, &self.full_weights())
    }

    /// One draw of column `j` for the rows of `x`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, x: &Design, rng: &mut R) -> Vec<f64> {
        draw(&self.mean(x), self.residual_sd, rng)
    }
}

fn conditional_mean(x: &Design, full: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; x.n_rows()];
    x.mul_into(full, &mut m);
    m
}

fn draw<R: rand::Rng + ?Sized>(mean: &[f64], sd: f64, rng: &mut R) -> Vec<f64> {
    mean.iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(rng);
            m + sd * z
        })
        .collect()
}

/// Plain lasso of `x_j` on `X_{-j}` at `lambda_dx`, objective
/// `(1/n) |x_j - X_{-j} b|^2 + lambda_dx |b|_1`.
pub fn fit_conditional_sampler(
    data: &Dataset,
    j: usize,
    lambda_dx: f64,
    opts: &SolverOptions,
) -> Result<ConditionalSampler> {
    if j >= data.p() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: data.p(),
        });
    }
    let problem = WeightedLassoProblem::build(
        data.x().col(j).to_vec(),
        drop_column(data.x(), j),
        vec![1.0; data.n()],
        lambda_dx,
        f64::INFINITY,
    )?;
    let fit = fit_weighted_lasso(&problem, opts)?;
    let mut full = fit.coefficients.to_vec();
    full.insert(j, 0.0);
    Ok(ConditionalSampler::from_full(data.x(), j, &full))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingConfig {
    /// `B`.
    pub n_resamples: usize,
    pub seed: u64,
    /// Share of each class held out for testing (HRT only).
    pub holdout_fraction: f64,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        ResamplingConfig {
            n_resamples: 500,
            seed: 0,
            holdout_fraction: 0.5,
        }
    }
}

impl ResamplingConfig {
    fn validate(&self) -> Result<()> {
        if self.n_resamples == 0 {
            return Err(Error::invalid("need at least one resample"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "holdout fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Importance statistic of the resampling CRT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrtStatistic {
    /// `|b_j|` from the logistic lasso.
    #[default]
    LassoLogisticCoefficient,
}

/// `(1 + #{b : resampled_b >= observed}) / (1 + B)`.
pub fn resampling_pvalue(observed: f64, resampled: &[f64]) -> f64 {
    let hits = resampled.iter().filter(|&&t| t >= observed).count();
    (1 + hits) as f64 / (1 + resampled.len()) as f64
}

/// Original CRT. Every variable is tested: the statistic `|b_j|` of the
/// cross-validated logistic lasso is compared with refits (at the same
/// penalty) in which column `j` is redrawn from its conditional sampler.
///
/// A variable with `b_j = 0` has p-value exactly 1, since no resampled
/// statistic can fall below zero; its refits are skipped.
pub fn vanilla_crt(
    data: &Dataset,
    resampling: &ResamplingConfig,
    config: &InferenceConfig,
    statistic: CrtStatistic,
) -> Result<InferenceOutput> {
    let CrtStatistic::LassoLogisticCoefficient = statistic;
    resampling.validate()?;
    config.validate()?;
    let opts = &config.solver;
    let seed = resampling.seed;
    let main = fit_main(data, config.lambda, config.n_folds, seed, opts)?;
    let beta_hat = main.model.coefficients.as_slice().expect("contiguous").to_vec();
    let lambda = main.model.lambda;
    let (x, y) = (data.x(), data.y_slice());
    let active: Vec<usize> = (0..data.p()).filter(|&j| beta_hat[j] != 0.0).collect();
    let distiller =
        (!active.is_empty()).then(|| Distiller::new(x, &vec![1.0; data.n()], config.lambda_dx, config.n_folds, seed));

    let work: Vec<(usize, usize)> = active
        .iter()
        .flat_map(|&j| (0..resampling.n_resamples).map(move |b| (j, b)))
        .collect();
    let samplers: Vec<(ConditionalSampler, f64, Vec<f64>)> = active
        .par_iter()
        .map(|&j| {
            let (full, lambda_dx) = distiller.as_ref().expect("active set nonempty").distill(j, opts);
            let sampler = ConditionalSampler::from_full(x, j, &full);
            let mean = sampler.mean(x);
            (sampler, lambda_dx, mean)
        })
        .collect();
    let resampled: Vec<f64> = work
        .par_iter()
        .map(|&(j, b)| {
            let slot = active.binary_search(&j).expect("active index");
            let (sampler, _, mean) = &samplers[slot];
            let mut rng = stream(seed, &[tag::RESAMPLE, j as u64, b as u64]);
            let column = draw(mean, sampler.residual_sd, &mut rng);
            let design = ReplacedColumn {
                base: x,
                index: j,
                column: &column,
            };
            let sol = solve_logistic(&design, y, lambda, opts, Some(&beta_hat), None, false);
            sol.beta[j].abs()
        })
        .collect();

    let results = (0..data.p())
        .map(|j| {
            let t = beta_hat[j].abs();
            let (p_value, lambda_dx) = match active.binary_search(&j) {
                Ok(slot) => {
                    let b = resampling.n_resamples;
                    let chunk = &resampled[slot * b..(slot + 1) * b];
                    (resampling_pvalue(t, chunk), Some(samplers[slot].1))
                }
                Err(_) => (1.0, None),
            };
            VariableResult {
                index: j,
                screened_in: true,
                statistic: Some(t),
                fisher_info: None,
                p_value,
                lambda_dx,
                degenerate: None,
            }
        })
        .collect();
    Ok(InferenceOutput {
        results,
        model: main.model,
        cv_curve: main.cv.map(|cv| cv.curve),
    })
}

/// Stratified train/test split: within each class a shuffled
/// `round(fraction * count)` samples go to the test side.
pub fn holdout_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = stream(seed, &[tag::SPLIT]);
    let y = data.y_slice();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0.0, 1.0] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(&mut rng);
        let k = (fraction * members.len() as f64).round() as usize;
        if k == 0 || k == members.len() {
            return Err(Error::SplitError(format!(
                "class {class} has {} samples; a {fraction} holdout leaves one side without it",
                members.len()
            )));
        }
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Holdout randomization test. The logistic lasso and the conditional
/// samplers are fitted on the training split; the statistic is the negated
/// held-out deviance, recomputed with column `j` of the test split redrawn.
///
/// Negating the risk makes an informative variable (whose redraw raises
/// the deviance) produce a small p-value under the `>=` count. Variables
/// with `b_j = 0` leave the predictions unchanged and get p-value 1.
pub fn hrt(data: &Dataset, resampling: &ResamplingConfig, config: &InferenceConfig) -> Result<InferenceOutput> {
    resampling.validate()?;
    config.validate()?;
    let opts = &config.solver;
    let seed = resampling.seed;
    let (train_rows, test_rows) = holdout_split(data, resampling.holdout_fraction, seed)?;
    let train = data.select_rows(&train_rows);
    let test = data.select_rows(&test_rows);
    let main = fit_main(&train, config.lambda, config.n_folds, seed, opts)?;
    let beta_hat = main.model.coefficients.as_slice().expect("contiguous").to_vec();
    let observed = -held_out_deviance(test.x(), test.y_slice(), &beta_hat);
    let mut eta = vec![0.0; test.n()];
    test.x().mul_into(&beta_hat, &mut eta);

    let active: Vec<usize> = (0..data.p()).filter(|&j| beta_hat[j] != 0.0).collect();
    let distiller = (!active.is_empty())
        .then(|| Distiller::new(train.x(), &vec![1.0; train.n()], config.lambda_dx, config.n_folds, seed));
    let computed: Vec<(f64, f64)> = active
        .par_iter()
        .map(|&j| {
            let (full, lambda_dx) = distiller.as_ref().expect("active set nonempty").distill(j, opts);
            let sampler = ConditionalSampler::from_full(train.x(), j, &full);
            let mean = sampler.mean(test.x());
            let xj = test.x().col(j);
            let base: Vec<f64> = eta.iter().zip(xj).map(|(e, a)| e - a * beta_hat[j]).collect();
            let resampled: Vec<f64> = (0..resampling.n_resamples)
                .map(|b| {
                    let mut rng = stream(seed, &[tag::RESAMPLE, j as u64, b as u64]);
                    let column = draw(&mean, sampler.residual_sd, &mut rng);
                    let eta_b: Vec<f64> = base.iter().zip(&column).map(|(e, c)| e + c * beta_hat[j]).collect();
                    -mean_deviance(&eta_b, test.y_slice())
                })
                .collect();
            (resampling_pvalue(observed, &resampled), lambda_dx)
        })
        .collect();

    let results = (0..data.p())
        .map(|j| {
            let (p_value, lambda_dx) = match active.binary_search(&j) {
                Ok(slot) => (computed[slot].0, Some(computed[slot].1)),
                Err(_) => (1.0, None),
            };
            VariableResult {
                index: j,
                screened_in: true,
                statistic: Some(observed),
                fisher_info: None,
                p_value,
                lambda_dx,
                degenerate: None,
            }
        })
        .collect();
    Ok(InferenceOutput {
        results,
        model: main.model,
        cv_curve: main.cv.map(|cv| cv.curve),
    })
}

fn mean_deviance(eta: &[f64], y: &[f64]) -> f64 {
    2.0 * eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| crate::stats::softplus(e) - yi * e)
        .sum::<f64>()
        / eta.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling_pvalue_bounds() {
        assert_eq!(resampling_pvalue(1.0, &[2.0]), 1.0);
        assert_eq!(resampling_pvalue(5.0, &[1.0, 2.0, 3.0]), 0.25);
        assert_eq!(resampling_pvalue(2.0, &[2.0, 2.0, 2.0]), 1.0);
    }
}
