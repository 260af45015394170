//! Synthetic logistic data with Gaussian AR(1) designs, and the replicated
//! experiments run on them.
//!
//! A replicate draws rows of `X` from `N(0, Sigma)` with
//! `Sigma_ab = rho^|a-b|`, places `s* = round(kappa p)` coefficients equal to
//! the signal magnitude, and draws `y_i ~ Bernoulli(g(X_i beta0 + sigma xi_i))`
//! with `sigma = |X beta0| / (sqrt(n) SNR)`.

mod experiments;

use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::multiple_testing::GroundTruth;
use crate::rng::{stream, tag};
use crate::stats::sigmoid;

pub use experiments::{
    run_fdr_power_sweep, run_lambda_heatmap, run_qq_experiment, run_runtime_bench, BenchRow, BenchTable,
    ExperimentOptions, HeatmapRow, HeatmapTable, Method, NullIndexRule, QqResult, QqTable, SweepParam, SweepRow,
    SweepTable, DEFAULT_RESAMPLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPlacement {
    /// Indices `floor(k p / s*)`, `k = 0..s*`, identical in every replicate.
    FixedEquispaced,
    /// Drawn without replacement per replicate.
    Random,
}

impl FromStr for SupportPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fixed_equispaced" | "fixed" | "equispaced" => Ok(SupportPlacement::FixedEquispaced),
            "random" => Ok(SupportPlacement::Random),
            _ => Err(Error::invalid(format!("unknown support placement '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: f64,
    /// `kappa = s* / p`.
    pub sparsity: f64,
    pub signal_magnitude: f64,
    pub seed: u64,
    pub support_placement: SupportPlacement,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 400,
            p: 600,
            rho: 0.5,
            snr: 2.0,
            sparsity: 0.04,
            signal_magnitude: 2.0,
            seed: 0,
            support_placement: SupportPlacement::Random,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::invalid(format!("n must be at least 4, got {}", self.n)));
        }
        if self.p < 1 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0) {
            return Err(Error::invalid(format!("snr must be positive, got {}", self.snr)));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::invalid(format!(
                "sparsity must lie in (0, 1], got {}",
                self.sparsity
            )));
        }
        if !self.signal_magnitude.is_finite() {
            return Err(Error::invalid("signal magnitude must be finite"));
        }
        Ok(())
    }

    /// `round(kappa p)`, at least 1 and at most `p`.
    pub fn support_size(&self) -> usize {
        let raw = (self.sparsity * self.p as f64).round() as usize;
        if raw < 1 {
            log::warn!(
                "sparsity {} with p = {} gives no signal; using one nonzero coefficient",
                self.sparsity,
                self.p
            );
        }
        raw.clamp(1, self.p)
    }
}

/// `Sigma_ab = rho^|a-b|`.
pub fn toeplitz_covariance(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(a, b)| rho.powi(a.abs_diff(b) as i32))
}

/// Draws rows from `N(0, Sigma)` for a fixed AR(1) covariance, keeping the
/// Cholesky factor between draws.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    p: usize,
    /// Transpose of the lower Cholesky factor.
    factor_t: Array2<f64>,
}

impl DesignSampler {
    pub fn new(p: usize, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
        }
        let sigma = DMatrix::from_fn(p, p, |a, b| rho.powi(a.abs_diff(b) as i32));
        let chol = sigma.cholesky().ok_or(Error::CholeskyFailure)?;
        let l = chol.l();
        let factor_t = Array2::from_shape_fn((p, p), |(a, b)| l[(b, a)]);
        Ok(DesignSampler { p, factor_t })
    }

    /// Lower Cholesky factor `L` with `L L' = Sigma`.
    pub fn factor(&self) -> Array2<f64> {
        self.factor_t.t().to_owned()
    }

    /// `n x p` design whose rows are i.i.d. `N(0, Sigma)`: `Z L'` for a
    /// standard normal `Z` drawn row by row from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let z = Array2::from_shape_simple_fn((n, self.p), || StandardNormal.sample(&mut *rng));
        z.dot(&self.factor_t)
    }
}

/// `n` rows from `N(0, Sigma)`, `Sigma_ab = rho^|a-b|`, deterministic in
/// `seed`.
pub fn toeplitz_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<Array2<f64>> {
    let sampler = DesignSampler::new(p, rho)?;
    Ok(sampler.sample(n, &mut stream(seed, &[tag::DESIGN])))
}

/// Generating coefficients and their support.
pub fn make_beta0(config: &SimulationConfig) -> Result<(Array1<f64>, GroundTruth)> {
    config.validate()?;
    let (p, s) = (config.p, config.support_size());
    let support: Vec<usize> = match config.support_placement {
        SupportPlacement::FixedEquispaced => (0..s).map(|k| k * p / s).collect(),
        SupportPlacement::Random => {
            let mut rng = stream(config.seed, &[tag::SUPPORT]);
            let mut v = sample_indices(&mut rng, p, s).into_vec();
            v.sort_unstable();
            v
        }
    };
    let mut beta0 = Array1::zeros(p);
    for &j in &support {
        beta0[j] = config.signal_magnitude;
    }
    Ok((beta0, GroundTruth::new(support, p)?))
}

/// Response draw: `sigma = |X beta0| / (sqrt(n) snr)`, `xi ~ N(0, I)` and
/// `y_i ~ Bernoulli(g(X_i beta0 + sigma xi_i))`.
///
/// Returns `(y, sigma, xi)`.
pub fn generate_response(
    x: &Array2<f64>,
    beta0: &Array1<f64>,
    snr: f64,
    seed: u64,
) -> Result<(Array1<f64>, f64, Array1<f64>)> {
    if !(snr > 0.0) {
        return Err(Error::invalid(format!("snr must be positive, got {snr}")));
    }
    if x.ncols() != beta0.len() {
        return Err(Error::invalid("design and coefficients disagree in dimension"));
    }
    let n = x.nrows();
    let signal = x.dot(beta0);
    let sigma = signal.dot(&signal).sqrt() / ((n as f64).sqrt() * snr);
    let mut noise_rng = stream(seed, &[tag::NOISE]);
    let xi: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut noise_rng)).collect();
    let mut response_rng = stream(seed, &[tag::RESPONSE]);
    let y: Array1<f64> = signal
        .iter()
        .zip(&xi)
        .map(|(&s, &e)| {
            let u: f64 = response_rng.random();
            if u < sigmoid(s + sigma * e) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((y, sigma, xi))
}

/// One synthetic data set with its generating truth.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: Dataset,
    pub beta0: Array1<f64>,
    pub support: GroundTruth,
    pub sigma: f64,
    pub xi: Array1<f64>,
    /// Seed of this replicate (`config.seed + index`).
    pub seed: u64,
}

impl Replicate {
    /// Replicate `index` of `config`.
    pub fn generate(config: &SimulationConfig, index: u64) -> Result<Self> {
        let sampler = DesignSampler::new(config.p, config.rho)?;
        Self::generate_with(config, &sampler, index)
    }

    /// As [`Replicate::generate`], reusing a design sampler built for
    /// `(config.p, config.rho)`.
    pub fn generate_with(config: &SimulationConfig, sampler: &DesignSampler, index: u64) -> Result<Self> {
        config.validate()?;
        if sampler.p != config.p {
            return Err(Error::invalid("design sampler built for a different p"));
        }
        let seed = config.seed.wrapping_add(index);
        let x = sampler.sample(config.n, &mut stream(seed, &[tag::DESIGN]));
        let (beta0, support) = make_beta0(&SimulationConfig { seed, ..config.clone() })?;
        let (y, sigma, xi) = generate_response(&x, &beta0, config.snr, seed)?;
        let data = Dataset::new(x.view(), y)?;
        Ok(Replicate {
            data,
            beta0,
            support,
            sigma,
            xi,
            seed,
        })
    }
}
