//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. `ACCEPTANCE_ONLY=1,6` restricts the run.

mod common;

use std::time::Instant;

use crt_logit::baselines::{hrt, vanilla_crt, CrtStatistic, ResamplingConfig};
use crt_logit::inference::{InferenceConfig, LambdaStrategy};
use crt_logit::multiple_testing::{bh_select, by_select};
use crt_logit::simulation::*;
use crt_logit::solvers::*;
use crt_logit::stats::mean_and_se;
use crt_logit::Dataset;
use ndarray::array;
use rand::Rng;

use common::*;

type Outcome = (bool, String);

fn null_normality() -> Outcome {
    let config = SimulationConfig {
        n: 400,
        p: 400,
        rho: 0.4,
        snr: 3.0,
        sparsity: 0.06,
        support_placement: SupportPlacement::FixedEquispaced,
        ..SimulationConfig::default()
    };
    let methods = [Method::CrtLogit { screening: true }, Method::Dcrt { screening: true }];
    let table = run_qq_experiment(
        &config,
        &methods,
        500,
        NullIndexRule::FirstNull,
        &InferenceConfig::default(),
    )
    .expect("qq experiment runs");
    let (crt, dcrt) = (&table.results[0], &table.results[1]);
    let pass = crt.ks_pvalue > 0.01 && crt.ks_statistic < dcrt.ks_statistic;
    (
        pass,
        format!(
            "variable {}: crt-logit KS {:.4} (p {:.3}, mean {:.3}, var {:.3}, {} undefined); dcrt KS {:.4} (p {:.2e})",
            table.tracked_index,
            crt.ks_statistic,
            crt.ks_pvalue,
            crt.mean,
            crt.variance,
            crt.failures,
            dcrt.ks_statistic,
            dcrt.ks_pvalue
        ),
    )
}

/// Criteria 2 and 3 share one set of replicates.
fn fdr_and_power() -> (Outcome, Outcome) {
    let config = SimulationConfig::default();
    let methods = [Method::CrtLogit { screening: true }, Method::Dcrt { screening: true }];
    let table = run_fdr_power_sweep(
        &config,
        SweepParam::Snr,
        &[config.snr],
        &methods,
        &ExperimentOptions::default(),
        30,
    )
    .expect("sweep runs");
    let summary = table.summary();
    let crt = summary
        .iter()
        .find(|c| c.method == "crt-logit")
        .expect("crt-logit cell");
    let dcrt = summary.iter().find(|c| c.method == "dcrt").expect("dcrt cell");
    let fdr = (
        crt.mean_fdp <= 0.15 && crt.n_ok >= 30,
        format!(
            "crt-logit FDR {:.4} (se {:.4}) over {} replicates",
            crt.mean_fdp, crt.se_fdp, crt.n_ok
        ),
    );
    let power_of = |name: &str| -> Vec<Option<f64>> {
        table
            .rows
            .iter()
            .filter(|r| r.method == name)
            .map(|r| r.power)
            .collect()
    };
    let diffs: Vec<f64> = power_of("crt-logit")
        .into_iter()
        .zip(power_of("dcrt"))
        .filter_map(|(a, b)| Some(a? - b?))
        .collect();
    let (mean_diff, se_diff) = mean_and_se(&diffs);
    let power = (
        mean_diff > se_diff && se_diff.is_finite(),
        format!(
            "power crt-logit {:.4} (se {:.4}), dcrt {:.4} (se {:.4}); paired difference {:.4} (se {:.4})",
            crt.mean_power, crt.se_power, dcrt.mean_power, dcrt.se_power, mean_diff, se_diff
        ),
    );
    (fdr, power)
}

fn lambda_sensitivity() -> Outcome {
    let config = SimulationConfig {
        n: 400,
        p: 400,
        rho: 0.5,
        snr: 3.0,
        sparsity: 0.05,
        ..SimulationConfig::default()
    };
    let multipliers = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0];
    let table =
        run_lambda_heatmap(&config, &[400], &multipliers, &ExperimentOptions::default(), 10).expect("heatmap runs");
    let cells = table.cells();
    let fdr: Vec<f64> = cells.iter().map(|c| c.mean_fdr).collect();
    let range =
        fdr.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - fdr.iter().cloned().fold(f64::INFINITY, f64::min);
    let detail: Vec<String> = cells
        .iter()
        .map(|c| format!("{}:{:.3}", c.multiplier, c.mean_fdr))
        .collect();
    (range > 0.05, format!("FDR range {range:.4} [{}]", detail.join(" ")))
}

fn screening_speedup() -> Outcome {
    let methods: Vec<Method> = Method::parse_list("crt-logit,crt-logit-noscreen,dcrt,hrt:500,crt:500").unwrap();
    let table = run_runtime_bench(&SimulationConfig::default(), &methods, &ExperimentOptions::default(), 1)
        .expect("bench runs");
    let summary = table.summary();
    let secs = |name: &str| {
        summary
            .iter()
            .find(|s| s.method == name)
            .expect("bench row")
            .mean_seconds
    };
    let speedup = secs("crt-logit-noscreen") / secs("crt-logit");
    let slowest = summary
        .iter()
        .max_by(|a, b| a.mean_seconds.total_cmp(&b.mean_seconds))
        .expect("nonempty bench");
    let errors = table.rows.iter().filter(|r| r.error.is_some()).count();
    let timings: Vec<String> = summary
        .iter()
        .map(|s| format!("{} {:.2}s", s.method, s.mean_seconds))
        .collect();
    (
        speedup >= 5.0 && slowest.method == "crt:500" && errors == 0,
        format!(
            "speedup {speedup:.2}x; slowest {}; {}",
            slowest.method,
            timings.join(", ")
        ),
    )
}

fn solver_oracles() -> Outcome {
    let opts = SolverOptions::default();
    let mut worst_kkt: f64 = 0.0;
    for seed in 0..100 {
        let data = random_logistic(30 + (seed as usize % 5) * 10, 3 + seed as usize % 8, seed);
        let lambda = (0.05 + 0.1 * (seed % 7) as f64) * logistic_lambda_max(&data);
        let fit = fit_sparse_logistic(&data, lambda, &opts).unwrap();
        worst_kkt = worst_kkt.max(logistic_kkt_violation(
            &data,
            fit.coefficients.as_slice().unwrap(),
            lambda,
        ));
        let problem = random_weighted_lasso(40, 3 + seed as usize % 9, seed, 0.02 + 0.01 * (seed % 50) as f64);
        let fit = fit_weighted_lasso(&problem, &opts).unwrap();
        worst_kkt = worst_kkt.max(weighted_lasso_kkt_residual(
            &problem,
            fit.coefficients.as_slice().unwrap(),
        ));
    }

    let mut worst_gap: f64 = 0.0;
    let designs = [
        (
            array![
                [0.8, -1.1],
                [1.9, 0.4],
                [-0.6, 1.2],
                [-1.4, -0.3],
                [0.3, 0.9],
                [-0.2, -1.6]
            ],
            array![1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ),
        (
            array![
                [1.0, 0.5],
                [-0.5, 1.5],
                [0.3, -0.7],
                [-1.2, -0.4],
                [0.9, 1.1],
                [-0.1, 0.2],
                [1.4, -1.0],
                [-0.8, 0.6]
            ],
            array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        ),
    ];
    for (x, y) in designs {
        let data = Dataset::new(x.view(), y).unwrap();
        for lambda in [0.02, 0.08, 0.2] {
            let fit = fit_sparse_logistic(&data, lambda, &opts).unwrap();
            let (brute, _) = brute_force_two_dim(&data, lambda, 1e-3);
            worst_gap = worst_gap.max((fit.objective_value - brute).abs());
        }
    }

    let mut worst_grad: f64 = 0.0;
    for seed in 0..10 {
        let data = random_logistic(40, 5, seed);
        let mut r = rng(seed);
        let beta: Vec<f64> = (0..5).map(|_| normal(&mut r)).collect();
        worst_grad = worst_grad.max(gradient_fd_error(&data, &beta));
    }

    let mut worst_soft: f64 = 0.0;
    for (i, lambda) in [0.0, 0.05, 0.2, 0.5].into_iter().enumerate() {
        let (problem, expected) = orthogonal_problem(40, 4, lambda, i as u64);
        let fit = fit_weighted_lasso(&problem, &tight()).unwrap();
        for (b, e) in fit.coefficients.iter().zip(&expected) {
            worst_soft = worst_soft.max((b - e).abs());
        }
    }
    (
        worst_kkt <= 1e-6 && worst_gap <= 1e-4 && worst_grad <= 1e-5 && worst_soft <= 1e-8,
        format!(
            "max KKT violation {worst_kkt:.1e}, brute-force gap {worst_gap:.1e}, gradient error {worst_grad:.1e}, soft-threshold error {worst_soft:.1e}"
        ),
    )
}

fn multiple_testing_cases() -> Outcome {
    let hand = [0.01, 0.03, 0.3, 0.9];
    let bh = bh_select(&hand, 0.1).unwrap();
    let by = by_select(&hand, 0.1).unwrap();
    let hand_ok = bh.k_hat == 2 && bh.selected == [0, 1] && by.k_hat == 1 && by.selected == [0];
    let empty_ok = bh_select(&[1.0; 10], 0.1).unwrap().selected.is_empty()
        && by_select(&[1.0; 10], 0.1).unwrap().selected.is_empty();
    let full_ok = bh_select(&[0.0; 10], 0.1).unwrap().selected.len() == 10
        && by_select(&[0.0; 10], 0.1).unwrap().selected.len() == 10;
    let mut r = rng(7);
    let mut violations = 0;
    for _ in 0..10_000 {
        let m = r.random_range(1..60);
        let p: Vec<f64> = (0..m).map(|_| r.random::<f64>().powi(2)).collect();
        let alpha = r.random_range(0.01..0.3);
        let bh = bh_select(&p, alpha).unwrap().selected;
        if by_select(&p, alpha).unwrap().selected.iter().any(|j| !bh.contains(j)) {
            violations += 1;
        }
    }
    (
        hand_ok && empty_ok && full_ok && violations == 0,
        format!(
            "hand case BH {} / BY {}, empty {empty_ok}, full {full_ok}, BY outside BH in {violations} of 10000",
            bh.k_hat, by.k_hat
        ),
    )
}

fn resampling_validity() -> Outcome {
    let config = SimulationConfig {
        n: 200,
        p: 20,
        rho: 0.3,
        sparsity: 0.1,
        support_placement: SupportPlacement::FixedEquispaced,
        ..SimulationConfig::default()
    };
    let b = 100;
    let reps = 500;
    let tracked = 1;
    let inference = InferenceConfig {
        lambda_dx: LambdaStrategy::Cv,
        ..InferenceConfig::default()
    };
    let mut crt = Vec::with_capacity(reps);
    let mut hold = Vec::with_capacity(reps);
    for rep in 0..reps as u64 {
        let r = Replicate::generate(&config, rep).unwrap();
        assert!(!r.support.contains(tracked));
        let resampling = ResamplingConfig {
            n_resamples: b,
            seed: rep,
            ..ResamplingConfig::default()
        };
        let out = vanilla_crt(&r.data, &resampling, &inference, CrtStatistic::default()).unwrap();
        crt.push(out.results[tracked].p_value);
        let out = hrt(&r.data, &resampling, &inference).unwrap();
        hold.push(out.results[tracked].p_value);
    }
    let slack = 2.0 / (1.0 + b as f64);
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, pv) in [("crt", &crt), ("hrt", &hold)] {
        for t in [0.05, 0.1, 0.2] {
            let frac = pv.iter().filter(|&&p| p <= t).count() as f64 / pv.len() as f64;
            pass &= frac <= t + slack;
            detail.push(format!("{name} P(p<={t})={frac:.3}"));
        }
    }
    (pass, format!("{} (bound t + {slack:.4})", detail.join(", ")))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|v| v.contains(&k));
    let mut failed = 0;
    let mut report = |k: usize, name: &str, (pass, detail): Outcome, start: Instant| {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {k} {name}: {detail} [{:.0}s]", start.elapsed().as_secs_f64());
        if !pass {
            failed += 1;
        }
    };

    if wanted(1) {
        let t = Instant::now();
        report(1, "null normality", null_normality(), t);
    }
    if wanted(2) || wanted(3) {
        let t = Instant::now();
        let (fdr, power) = fdr_and_power();
        if wanted(2) {
            report(2, "FDR control at defaults", fdr, t);
        }
        if wanted(3) {
            report(3, "power ordering", power, t);
        }
    }
    if wanted(4) {
        let t = Instant::now();
        report(4, "lambda sensitivity", lambda_sensitivity(), t);
    }
    if wanted(5) {
        let t = Instant::now();
        report(5, "screening speedup and bench ordering", screening_speedup(), t);
    }
    if wanted(6) {
        let t = Instant::now();
        report(6, "solver oracles", solver_oracles(), t);
    }
    if wanted(7) {
        let t = Instant::now();
        report(7, "multiple-testing cases", multiple_testing_cases(), t);
    }
    if wanted(8) {
        let t = Instant::now();
        report(8, "resampling p-value validity", resampling_validity(), t);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
