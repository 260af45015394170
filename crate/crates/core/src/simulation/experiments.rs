use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DesignSampler, Replicate, SimulationConfig, SupportPlacement};
use crate::baselines::{dcrt, dcrt_given_fit, hrt, vanilla_crt, CrtStatistic, ResamplingConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{
    crt_logit, crt_logit_given_fit, crt_logit_lambda_dx_sweep, fit_main, universal_lambda, InferenceConfig,
    InferenceOutput, LambdaStrategy, VariableResult,
};
use crate::multiple_testing::{score_selection, select, GroundTruth, Procedure};
use crate::rng::{derive_seed, tag};
use crate::stats::{ks_pvalue, ks_statistic_normal, mean_and_se, normal_quantile};

/// Default number of resamples for the resampling tests.
pub const DEFAULT_RESAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    CrtLogit { screening: bool },
    Dcrt { screening: bool },
    VanillaCrt { resamples: usize },
    Hrt { resamples: usize },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::CrtLogit { screening: true } => "crt-logit".into(),
            Method::CrtLogit { screening: false } => "crt-logit-noscreen".into(),
            Method::Dcrt { screening: true } => "dcrt".into(),
            Method::Dcrt { screening: false } => "dcrt-noscreen".into(),
            Method::VanillaCrt { resamples } => format!("crt:{resamples}"),
            Method::Hrt { resamples } => format!("hrt:{resamples}"),
        }
    }

    /// Runs the method on `data`. `seed` drives fold splits and resampling.
    pub fn run(&self, data: &Dataset, inference: &InferenceConfig, seed: u64) -> Result<InferenceOutput> {
        match *self {
            Method::CrtLogit { screening } => crt_logit(
                data,
                &InferenceConfig {
                    screening,
                    ..inference.clone()
                },
                seed,
            ),
            Method::Dcrt { screening } => dcrt(
                data,
                &InferenceConfig {
                    screening,
                    ..inference.clone()
                },
                seed,
            ),
            Method::VanillaCrt { resamples } => vanilla_crt(
                data,
                &ResamplingConfig {
                    n_resamples: resamples,
                    seed,
                    ..Default::default()
                },
                inference,
                CrtStatistic::LassoLogisticCoefficient,
            ),
            Method::Hrt { resamples } => hrt(
                data,
                &ResamplingConfig {
                    n_resamples: resamples,
                    seed,
                    ..Default::default()
                },
                inference,
            ),
        }
    }

    /// Parses a comma-separated method list.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `crt-logit`, `crt-logit-noscreen`, `dcrt`, `dcrt-noscreen`, `crt[:B]`,
    /// `hrt[:B]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, b) = match s.split_once(':') {
            Some((h, b)) => {
                let b: usize = b
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad resample count in '{s}'")))?;
                if b == 0 {
                    return Err(Error::invalid("resample count must be positive"));
                }
                (h.to_string(), Some(b))
            }
            None => (s.clone(), None),
        };
        let plain = |m: Method| {
            if b.is_some() {
                Err(Error::invalid(format!("method '{head}' takes no resample count")))
            } else {
                Ok(m)
            }
        };
        match head.as_str() {
            "crt-logit" => plain(Method::CrtLogit { screening: true }),
            "crt-logit-noscreen" => plain(Method::CrtLogit { screening: false }),
            "dcrt" => plain(Method::Dcrt { screening: true }),
            "dcrt-noscreen" => plain(Method::Dcrt { screening: false }),
            "crt" => Ok(Method::VanillaCrt {
                resamples: b.unwrap_or(DEFAULT_RESAMPLES),
            }),
            "hrt" => Ok(Method::Hrt {
                resamples: b.unwrap_or(DEFAULT_RESAMPLES),
            }),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

/// Settings shared by the replicated experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub inference: InferenceConfig,
    pub alpha: f64,
    pub procedure: Procedure,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            inference: InferenceConfig::default(),
            alpha: 0.1,
            procedure: Procedure::BenjaminiHochberg,
        }
    }
}

fn method_seed(replicate: &Replicate) -> u64 {
    derive_seed(replicate.seed, &[tag::METHOD])
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_error(e: impl fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn write_records<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

/// Which null variable the QQ experiment follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullIndexRule {
    /// Smallest index outside the support (next to the first signal).
    FirstNull,
    Index(usize),
}

impl FromStr for NullIndexRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "first-null" | "first_null" => Ok(NullIndexRule::FirstNull),
            other => other
                .parse()
                .map(NullIndexRule::Index)
                .map_err(|_| Error::invalid(format!("expected 'first-null' or an index, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqResult {
    pub method: String,
    /// Statistic of the tracked variable per replicate; `None` where it was
    /// undefined or the run failed.
    pub statistics: Vec<Option<f64>>,
    pub failures: usize,
    pub mean: f64,
    pub variance: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
}

impl QqResult {
    fn new(method: String, statistics: Vec<Option<f64>>) -> Self {
        let finite: Vec<f64> = statistics.iter().flatten().copied().collect();
        let m = finite.len();
        let mean = finite.iter().sum::<f64>() / m as f64;
        let variance = finite.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let ks = if m > 0 { ks_statistic_normal(&finite) } else { f64::NAN };
        QqResult {
            failures: statistics.len() - m,
            method,
            statistics,
            mean,
            variance,
            ks_statistic: ks,
            ks_pvalue: if m > 0 { ks_pvalue(ks, m) } else { f64::NAN },
        }
    }

    /// Finite statistics in ascending order.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.statistics.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `Phi^{-1}((i - 1/2) / m)` for `i = 1..m`, `m` finite statistics.
    pub fn theoretical_quantiles(&self) -> Vec<f64> {
        let m = self.statistics.iter().flatten().count();
        (1..=m).map(|i| normal_quantile((i as f64 - 0.5) / m as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqTable {
    pub tracked_index: usize,
    pub results: Vec<QqResult>,
}

impl QqTable {
    /// One row per (method, replicate): the replicate's statistic next to
    /// the empirical and theoretical quantiles of the same rank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.results.iter().flat_map(|r| {
            let sorted = r.sorted();
            let theo = r.theoretical_quantiles();
            let tracked = self.tracked_index;
            r.statistics.iter().enumerate().map(move |(i, s)| {
                vec![
                    r.method.clone(),
                    tracked.to_string(),
                    i.to_string(),
                    fmt_opt(*s),
                    fmt_opt(sorted.get(i).copied()),
                    fmt_opt(theo.get(i).copied()),
                ]
            })
        });
        write_records(
            out,
            &[
                "method",
                "variable",
                "replicate",
                "statistic",
                "empirical_quantile",
                "theoretical_quantile",
            ],
            rows,
        )
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.results.iter().map(|r| {
            vec![
                r.method.clone(),
                self.tracked_index.to_string(),
                (r.statistics.len() - r.failures).to_string(),
                r.failures.to_string(),
                fmt_f64(r.mean),
                fmt_f64(r.variance),
                fmt_f64(r.ks_statistic),
                fmt_f64(r.ks_pvalue),
            ]
        });
        write_records(
            out,
            &[
                "method",
                "variable",
                "n_finite",
                "failures",
                "mean",
                "variance",
                "ks_statistic",
                "ks_pvalue",
            ],
            rows,
        )
    }
}

/// Null-statistic experiment: with the support fixed, every replicate
/// regenerates `(X, y)` and each method computes the statistic of one null
/// variable without screening.
pub fn run_qq_experiment(
    config: &SimulationConfig,
    methods: &[Method],
    n_replicates: usize,
    rule: NullIndexRule,
    inference: &InferenceConfig,
) -> Result<QqTable> {
    config.validate()?;
    if config.support_placement != SupportPlacement::FixedEquispaced {
        return Err(Error::invalid("the QQ experiment needs a fixed (equispaced) support"));
    }
    if let Some(m) = methods
        .iter()
        .find(|m| !matches!(m, Method::CrtLogit { .. } | Method::Dcrt { .. }))
    {
        return Err(Error::invalid(format!("method {m} has no normal null statistic")));
    }
    let (_, support) = super::make_beta0(config)?;
    let tracked = match rule {
        NullIndexRule::FirstNull => (0..config.p)
            .find(|&j| !support.contains(j))
            .ok_or_else(|| Error::invalid("every variable is in the support"))?,
        NullIndexRule::Index(j) => {
            if j >= config.p {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: config.p,
                });
            }
            if support.contains(j) {
                return Err(Error::invalid(format!("variable {j} is in the support, not a null")));
            }
            j
        }
    };
    let sampler = DesignSampler::new(config.p, config.rho)?;
    let cfg = InferenceConfig {
        screening: false,
        ..inference.clone()
    };
    let per_replicate: Vec<Vec<Option<f64>>> = (0..n_replicates as u64)
        .into_par_iter()
        .map(|r| {
            let rep = match Replicate::generate_with(config, &sampler, r) {
                Ok(rep) => rep,
                Err(e) => {
                    log::warn!("replicate {r}: {e}");
                    return vec![None; methods.len()];
                }
            };
            let seed = method_seed(&rep);
            // both methods start from the same full fit
            let main = match fit_main(&rep.data, cfg.lambda, cfg.n_folds, seed, &cfg.solver) {
                Ok(main) => main,
                Err(e) => {
                    log::warn!("replicate {r}: {e}");
                    return vec![None; methods.len()];
                }
            };
            methods
                .iter()
                .map(|m| {
                    let out = match m {
                        Method::CrtLogit { .. } => {
                            crt_logit_given_fit(&rep.data, &main.model, &main.eta, &cfg, seed, &[tracked])
                        }
                        _ => dcrt_given_fit(&rep.data, &main, &cfg, seed, &[tracked]),
                    };
                    out[0].statistic
                })
                .collect()
        })
        .collect();
    let results = methods
        .iter()
        .enumerate()
        .map(|(k, m)| QqResult::new(m.name(), per_replicate.iter().map(|v| v[k]).collect()))
        .collect();
    Ok(QqTable {
        tracked_index: tracked,
        results,
    })
}

/// Simulation parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    P,
    Rho,
    Snr,
    Sparsity,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::P => "p",
            SweepParam::Rho => "rho",
            SweepParam::Snr => "snr",
            SweepParam::Sparsity => "sparsity",
        }
    }

    pub fn apply(&self, base: &SimulationConfig, value: f64) -> Result<SimulationConfig> {
        let mut cfg = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!(
                    "{} must be a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParam::N => cfg.n = as_count(value)?,
            SweepParam::P => cfg.p = as_count(value)?,
            SweepParam::Rho => cfg.rho = value,
            SweepParam::Snr => cfg.snr = value,
            SweepParam::Sparsity => cfg.sparsity = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" => Ok(SweepParam::N),
            "p" => Ok(SweepParam::P),
            "rho" => Ok(SweepParam::Rho),
            "snr" => Ok(SweepParam::Snr),
            "sparsity" | "kappa" => Ok(SweepParam::Sparsity),
            _ => Err(Error::invalid(format!("cannot sweep over '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub value: f64,
    pub replicate: usize,
    pub fdp: Option<f64>,
    pub power: Option<f64>,
    pub n_selected: Option<usize>,
    pub error: Option<String>,
}

/// Summary statistics of one (method, value) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub value: f64,
    pub n_ok: usize,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: f64,
    pub se_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

fn summarize<'a>(
    keys: impl Iterator<Item = (String, f64)>,
    rows: impl Fn(&str, f64) -> Vec<(Option<f64>, Option<f64>)> + 'a,
) -> Vec<CellSummary> {
    keys.map(|(method, value)| {
        let cell = rows(&method, value);
        let fdp: Vec<f64> = cell.iter().filter_map(|r| r.0).collect();
        let power: Vec<f64> = cell.iter().filter_map(|r| r.1).collect();
        let (mean_fdp, se_fdp) = mean_and_se(&fdp);
        let (mean_power, se_power) = mean_and_se(&power);
        CellSummary {
            method,
            value,
            n_ok: fdp.len(),
            mean_fdp,
            se_fdp,
            mean_power,
            se_power,
        }
    })
    .collect()
}

/// Distinct keys in first-seen order.
fn distinct<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

impl SweepTable {
    pub fn summary(&self) -> Vec<CellSummary> {
        let keys = distinct(self.rows.iter().map(|r| (r.method.clone(), r.value)));
        summarize(keys.into_iter(), |m, v| {
            self.rows
                .iter()
                .filter(|r| r.method == m && r.value == v)
                .map(|r| (r.fdp, r.power))
                .collect()
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.method.clone(),
                self.param.name().into(),
                fmt_f64(r.value),
                r.replicate.to_string(),
                fmt_opt(r.fdp),
                fmt_opt(r.power),
                r.n_selected.map(|k| k.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ]
        });
        write_records(
            out,
            &[
                "method",
                "param",
                "value",
                "replicate",
                "fdp",
                "power",
                "n_selected",
                "error",
            ],
            rows,
        )
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.summary().into_iter().map(|c| {
            vec![
                c.method,
                self.param.name().into(),
                fmt_f64(c.value),
                c.n_ok.to_string(),
                fmt_f64(c.mean_fdp),
                fmt_f64(c.se_fdp),
                fmt_f64(c.mean_power),
                fmt_f64(c.se_power),
            ]
        });
        write_records(
            out,
            &[
                "method",
                "param",
                "value",
                "n_ok",
                "mean_fdp",
                "se_fdp",
                "mean_power",
                "se_power",
            ],
            rows,
        )
    }
}

fn score(
    results: &[VariableResult],
    truth: &GroundTruth,
    opts: &ExperimentOptions,
) -> Result<(f64, Option<f64>, usize)> {
    let pvalues: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let report = select(&pvalues, opts.alpha, opts.procedure)?;
    let s = score_selection(&report, truth);
    Ok((s.fdp, s.power, report.k_hat))
}

/// FDP and power of every method over `n_replicates` data sets per value of
/// the swept parameter. Replicate `r` of every cell uses seed
/// `base.seed + r`; a failing run is recorded, not fatal.
pub fn run_fdr_power_sweep(
    base: &SimulationConfig,
    param: SweepParam,
    values: &[f64],
    methods: &[Method],
    opts: &ExperimentOptions,
    n_replicates: usize,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if methods.is_empty() {
        return Err(Error::invalid("no methods given"));
    }
    let configs: Vec<SimulationConfig> = values.iter().map(|&v| param.apply(base, v)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (cfg, &value) in configs.iter().zip(values) {
        let sampler = DesignSampler::new(cfg.p, cfg.rho)?;
        let cell: Vec<Vec<SweepRow>> = (0..n_replicates)
            .into_par_iter()
            .map(|r| {
                let rep = Replicate::generate_with(cfg, &sampler, r as u64);
                methods
                    .iter()
                    .map(|m| {
                        let outcome = rep.as_ref().map_err(Clone::clone).and_then(|rep| {
                            let out = m.run(&rep.data, &opts.inference, method_seed(rep))?;
                            score(&out.results, &rep.support, opts)
                        });
                        let (fdp, power, n_selected, error) = match outcome {
                            Ok((f, p, k)) => (Some(f), p, Some(k), None),
                            Err(e) => (None, None, None, Some(e.to_string())),
                        };
                        SweepRow {
                            method: m.name(),
                            value,
                            replicate: r,
                            fdp,
                            power,
                            n_selected,
                            error,
                        }
                    })
                    .collect()
            })
            .collect();
        // method-major within a cell
        for k in 0..methods.len() {
            rows.extend(cell.iter().map(|v| v[k].clone()));
        }
    }
    Ok(SweepTable { param, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub n: usize,
    pub multiplier: f64,
    pub lambda_dx: f64,
    pub replicate: usize,
    pub fdp: Option<f64>,
    pub power: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub n: usize,
    pub multiplier: f64,
    pub n_ok: usize,
    pub mean_fdr: f64,
    pub se_fdr: f64,
    pub mean_power: f64,
    pub se_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapTable {
    pub rows: Vec<HeatmapRow>,
}

impl HeatmapTable {
    pub fn cells(&self) -> Vec<HeatmapCell> {
        let keys = distinct(self.rows.iter().map(|r| (r.n, r.multiplier)));
        keys.into_iter()
            .map(|(n, multiplier)| {
                let cell: Vec<&HeatmapRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.n == n && r.multiplier == multiplier)
                    .collect();
                let fdp: Vec<f64> = cell.iter().filter_map(|r| r.fdp).collect();
                let power: Vec<f64> = cell.iter().filter_map(|r| r.power).collect();
                let (mean_fdr, se_fdr) = mean_and_se(&fdp);
                let (mean_power, se_power) = mean_and_se(&power);
                HeatmapCell {
                    n,
                    multiplier,
                    n_ok: fdp.len(),
                    mean_fdr,
                    se_fdr,
                    mean_power,
                    se_power,
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                fmt_f64(r.multiplier),
                fmt_f64(r.lambda_dx),
                r.replicate.to_string(),
                fmt_opt(r.fdp),
                fmt_opt(r.power),
                r.error.clone().unwrap_or_default(),
            ]
        });
        write_records(
            out,
            &["n", "multiplier", "lambda_dx", "replicate", "fdp", "power", "error"],
            rows,
        )
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.cells().into_iter().map(|c| {
            vec![
                c.n.to_string(),
                fmt_f64(c.multiplier),
                c.n_ok.to_string(),
                fmt_f64(c.mean_fdr),
                fmt_f64(c.se_fdr),
                fmt_f64(c.mean_power),
                fmt_f64(c.se_power),
            ]
        });
        write_records(
            out,
            &[
                "n",
                "multiplier",
                "n_ok",
                "mean_fdr",
                "se_fdr",
                "mean_power",
                "se_power",
            ],
            rows,
        )
    }
}

/// CRT-logit FDR and power over a grid of sample sizes and fixed
/// x-distillation penalties `multiplier * sqrt(log p / n)`. The full
/// logistic fit of a replicate is shared by all multipliers.
pub fn run_lambda_heatmap(
    config: &SimulationConfig,
    n_values: &[usize],
    multipliers: &[f64],
    opts: &ExperimentOptions,
    n_replicates: usize,
) -> Result<HeatmapTable> {
    if n_values.is_empty() || multipliers.is_empty() {
        return Err(Error::invalid("heatmap grid is empty"));
    }
    if let Some(m) = multipliers.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
        return Err(Error::invalid(format!(
            "multiplier {m} is not a finite nonnegative number"
        )));
    }
    let sampler = DesignSampler::new(config.p, config.rho)?;
    let mut rows = Vec::new();
    for &n in n_values {
        let cfg = SimulationConfig { n, ..config.clone() };
        cfg.validate()?;
        let univ = universal_lambda(n, cfg.p);
        let strategies: Vec<LambdaStrategy> = multipliers.iter().map(|m| LambdaStrategy::Fixed(m * univ)).collect();
        let per_rep: Vec<Vec<HeatmapRow>> = (0..n_replicates)
            .into_par_iter()
            .map(|r| {
                let outcome = Replicate::generate_with(&cfg, &sampler, r as u64).and_then(|rep| {
                    let (_, runs) =
                        crt_logit_lambda_dx_sweep(&rep.data, &opts.inference, method_seed(&rep), &strategies)?;
                    runs.iter()
                        .map(|res| score(res, &rep.support, opts))
                        .collect::<Result<Vec<_>>>()
                });
                multipliers
                    .iter()
                    .enumerate()
                    .map(|(k, &multiplier)| {
                        let (fdp, power, error) = match &outcome {
                            Ok(s) => (Some(s[k].0), s[k].1, None),
                            Err(e) => (None, None, Some(e.to_string())),
                        };
                        HeatmapRow {
                            n,
                            multiplier,
                            lambda_dx: multiplier * univ,
                            replicate: r,
                            fdp,
                            power,
                            error,
                        }
                    })
                    .collect()
            })
            .collect();
        for k in 0..multipliers.len() {
            rows.extend(per_rep.iter().map(|v| v[k].clone()));
        }
    }
    Ok(HeatmapTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub replicate: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub method: String,
    pub n_runs: usize,
    pub mean_seconds: f64,
    pub se_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn summary(&self) -> Vec<BenchSummary> {
        distinct(self.rows.iter().map(|r| r.method.clone()))
            .into_iter()
            .map(|method| {
                let times: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.error.is_none())
                    .map(|r| r.seconds)
                    .collect();
                let (mean_seconds, se_seconds) = mean_and_se(&times);
                BenchSummary {
                    method,
                    n_runs: times.len(),
                    mean_seconds,
                    se_seconds,
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.method.clone(),
                r.replicate.to_string(),
                fmt_f64(r.seconds),
                r.error.clone().unwrap_or_default(),
            ]
        });
        write_records(out, &["method", "replicate", "seconds", "error"], rows)
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.summary().into_iter().map(|s| {
            vec![
                s.method,
                s.n_runs.to_string(),
                fmt_f64(s.mean_seconds),
                fmt_f64(s.se_seconds),
            ]
        });
        write_records(out, &["method", "n_runs", "mean_seconds", "se_seconds"], rows)
    }
}

/// Wall-clock time of one full run of each method, per replicate. Runs are
/// sequential so timings do not compete for cores.
pub fn run_runtime_bench(
    config: &SimulationConfig,
    methods: &[Method],
    opts: &ExperimentOptions,
    n_replicates: usize,
) -> Result<BenchTable> {
    let sampler = DesignSampler::new(config.p, config.rho)?;
    let mut rows = Vec::new();
    for r in 0..n_replicates {
        let rep = Replicate::generate_with(config, &sampler, r as u64)?;
        for m in methods {
            let start = Instant::now();
            let out = m.run(&rep.data, &opts.inference, method_seed(&rep));
            let seconds = start.elapsed().as_secs_f64();
            rows.push(BenchRow {
                method: m.name(),
                replicate: r,
                seconds,
                error: out.err().map(|e| e.to_string()),
            });
        }
    }
    Ok(BenchTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for s in [
            "crt-logit",
            "crt-logit-noscreen",
            "dcrt",
            "dcrt-noscreen",
            "crt:500",
            "hrt:100",
        ] {
            assert_eq!(s.parse::<Method>().unwrap().name(), s);
        }
        assert_eq!("crt".parse::<Method>().unwrap(), Method::VanillaCrt { resamples: 500 });
        assert!("dcrt:5".parse::<Method>().is_err());
        assert!("knockoff".parse::<Method>().is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
