mod common;

use approx::assert_abs_diff_eq;
use crt_logit::solvers::*;
use crt_logit::{Columns, Dataset};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn six_by_two() -> Dataset {
    let x = array![
        [0.8, -1.1],
        [1.9, 0.4],
        [-0.6, 1.2],
        [-1.4, -0.3],
        [0.3, 0.9],
        [-0.2, -1.6]
    ];
    Dataset::new(x.view(), array![1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()
}

#[test]
fn brute_force_objective_agrees_on_six_samples() {
    let data = six_by_two();
    for lambda in [0.02, 0.08, 0.2] {
        let fit = fit_sparse_logistic(&data, lambda, &SolverOptions::default()).unwrap();
        assert!(fit.converged);
        let (brute, at) = brute_force_two_dim(&data, lambda, 1e-3);
        assert!(
            at.iter().all(|b| b.abs() < 2.99),
            "grid minimum on the boundary: {at:?}"
        );
        assert!(fit.objective_value <= brute + 1e-9);
        assert!(
            brute - fit.objective_value <= 1e-4,
            "gap {}",
            brute - fit.objective_value
        );
    }
}

#[test]
fn zero_solution_at_and_above_lambda_max() {
    for seed in 0..5 {
        let data = random_logistic(50, 8, seed);
        let lmax = logistic_lambda_max(&data);
        let fit = fit_sparse_logistic(&data, lmax, &SolverOptions::default()).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let fit = fit_sparse_logistic(&data, 0.95 * lmax, &SolverOptions::default()).unwrap();
        assert!(fit.coefficients.iter().any(|&b| b != 0.0));
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let data = random_logistic(40, 5, 11);
    for beta in [
        vec![0.0; 5],
        vec![0.5, -0.3, 0.0, 1.2, -0.8],
        vec![2.0, 2.0, -2.0, 0.1, 0.0],
    ] {
        assert!(gradient_fd_error(&data, &beta) <= 1e-5);
    }
}

#[test]
fn orthogonal_design_gives_soft_threshold() {
    for (lambda, seed) in [(0.05, 1), (0.2, 2), (0.0, 3)] {
        let (problem, expected) = orthogonal_problem(40, 4, lambda, seed);
        let fit = fit_weighted_lasso(&problem, &tight()).unwrap();
        for (b, e) in fit.coefficients.iter().zip(&expected) {
            assert_abs_diff_eq!(*b, *e, epsilon = 1e-8);
        }
    }
}

#[test]
fn weighted_lasso_zero_at_lambda_max() {
    let problem = random_weighted_lasso(60, 6, 4, 1.0);
    let fit = fit_weighted_lasso(&problem, &SolverOptions::default()).unwrap();
    assert!(fit.coefficients.iter().all(|&b| b == 0.0));
}

#[test]
fn gram_and_residual_solvers_agree() {
    let problem = random_weighted_lasso(50, 7, 8, 0.1);
    let direct = fit_weighted_lasso(&problem, &tight()).unwrap();
    let n = problem.n();
    let mut cols: Vec<Vec<f64>> = (0..7).map(|k| problem.predictors().col(k).to_vec()).collect();
    cols.push(problem.targets().to_vec());
    let z = crt_logit::Design::from_columns(n, &cols);
    let gram = WeightedGram::new(&z, problem.weights());
    let mut beta = vec![0.0; 8];
    gram_lasso(&gram, 7, problem.lambda_dx(), &mut beta, &tight());
    for (b, d) in beta.iter().zip(direct.coefficients.iter()) {
        assert_abs_diff_eq!(*b, *d, epsilon = 1e-8);
    }
}

#[test]
fn singleton_grid_returns_its_value() {
    let data = random_logistic(40, 4, 2);
    let plan = CvPlan::new(2, vec![0.05], Scoring::Deviance).unwrap();
    let curve = cross_validate(CvTarget::Logistic(&data), &plan, 0, &SolverOptions::default()).unwrap();
    assert_eq!(curve.best_lambda, 0.05);
}

#[test]
fn strong_signal_selects_lambda_below_max() {
    let mut r = rng(5);
    let x = Array2::from_shape_simple_fn((200, 4), || normal(&mut r));
    let y: Array1<f64> = x.column(0).iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut y = y;
    // flip a few labels so the classes are not separable
    for i in (0..200).step_by(9) {
        y[i] = 1.0 - y[i];
    }
    let data = Dataset::new(x.view(), y).unwrap();
    let lmax = logistic_lambda_max(&data);
    let plan = CvPlan::new(5, log_grid(lmax, 10, 1e-2), Scoring::Deviance).unwrap();
    let curve = cross_validate(CvTarget::Logistic(&data), &plan, 1, &SolverOptions::default()).unwrap();
    assert!(curve.best_lambda < lmax);
}

/// Mean binomial deviance of `X beta` on rows `rows`.
fn deviance(data: &Dataset, rows: &[usize], beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for &i in rows {
        let eta: f64 = (0..data.p()).map(|k| data.x().get(i, k) * beta[k]).sum();
        let prob = 1.0 / (1.0 + (-eta).exp());
        let y = data.y()[i];
        total -= 2.0 * (y * prob.ln() + (1.0 - y) * (1.0 - prob).ln());
    }
    total / rows.len() as f64
}

#[test]
fn cv_curve_matches_independent_reimplementation() {
    let data = random_logistic(40, 5, 21);
    let lmax = logistic_lambda_max(&data);
    let grid = vec![0.6 * lmax, 0.3 * lmax, 0.1 * lmax];
    let seed = 13;
    let plan = CvPlan::new(2, grid.clone(), Scoring::Deviance).unwrap();
    let curve = cross_validate(CvTarget::Logistic(&data), &plan, seed, &tight()).unwrap();

    // stratified split: shuffle each class with one stream, deal round-robin
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut zeros: Vec<usize> = (0..40).filter(|&i| data.y()[i] == 0.0).collect();
    let mut ones: Vec<usize> = (0..40).filter(|&i| data.y()[i] == 1.0).collect();
    zeros.shuffle(&mut rng);
    ones.shuffle(&mut rng);
    let mut fold = vec![0; 40];
    for (pos, &i) in zeros.iter().chain(&ones).enumerate() {
        fold[i] = pos % 2;
    }

    assert_eq!(curve.curve.len(), 3);
    for (g, &lambda) in grid.iter().enumerate() {
        let mut mean = 0.0;
        for f in 0..2 {
            let train: Vec<usize> = (0..40).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..40).filter(|&i| fold[i] == f).collect();
            let sub = data.select_rows(&train);
            let fit = fit_sparse_logistic(&sub, lambda, &tight()).unwrap();
            mean += deviance(&data, &test, fit.coefficients.as_slice().unwrap()) / 2.0;
        }
        assert_abs_diff_eq!(curve.curve[g].1, mean, epsilon = 1e-7);
    }
}

#[test]
fn objective_trace_never_increases() {
    for seed in 0..10 {
        let data = random_logistic(60, 12, 100 + seed);
        let lambda = 0.05 * logistic_lambda_max(&data);
        let (_, trace) = fit_sparse_logistic_traced(&data, lambda, &SolverOptions::default()).unwrap();
        // up to rounding in the objective evaluation
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-14 * w[0].abs()), "{trace:?}");
    }
}

#[test]
fn kkt_holds_on_random_logistic_instances() {
    for seed in 0..100 {
        let n = 30 + (seed as usize % 5) * 10;
        let p = 3 + seed as usize % 8;
        let data = random_logistic(n, p, seed);
        let lambda = (0.05 + 0.1 * (seed % 7) as f64) * logistic_lambda_max(&data);
        let fit = fit_sparse_logistic(&data, lambda, &SolverOptions::default()).unwrap();
        assert!(fit.converged, "seed {seed}");
        let v = logistic_kkt_violation(&data, fit.coefficients.as_slice().unwrap(), lambda);
        assert!(v <= 1e-6, "seed {seed}: violation {v}");
    }
}

#[test]
fn kkt_holds_on_random_weighted_lasso_instances() {
    for seed in 0..100 {
        let problem = random_weighted_lasso(40, 3 + seed as usize % 9, seed, 0.02 + 0.01 * (seed % 50) as f64);
        let fit = fit_weighted_lasso(&problem, &SolverOptions::default()).unwrap();
        assert!(fit.converged);
        let v = weighted_lasso_kkt_residual(&problem, fit.coefficients.as_slice().unwrap());
        assert!(v <= 1e-6, "seed {seed}: violation {v}");
    }
}

#[test]
fn warm_start_reaches_same_optimum() {
    let data = random_logistic(80, 30, 7);
    let lmax = logistic_lambda_max(&data);
    let cold = fit_sparse_logistic(&data, 0.1 * lmax, &SolverOptions::default()).unwrap();
    let prev = fit_sparse_logistic(&data, 0.3 * lmax, &SolverOptions::default()).unwrap();
    let warm = fit_sparse_logistic_warm(
        &data,
        0.1 * lmax,
        &SolverOptions::default(),
        prev.coefficients.as_slice().unwrap(),
    )
    .unwrap();
    assert_abs_diff_eq!(cold.objective_value, warm.objective_value, epsilon = 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn logistic_solution_satisfies_kkt(seed in 0u64..10_000, frac in 0.02f64..1.2) {
        let data = random_logistic(40, 6, seed);
        let lambda = frac * logistic_lambda_max(&data);
        let fit = fit_sparse_logistic(&data, lambda, &SolverOptions::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(logistic_kkt_violation(&data, fit.coefficients.as_slice().unwrap(), lambda) <= 1e-6);
        if frac >= 1.0 {
            prop_assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn l1_norm_shrinks_as_lambda_grows(seed in 0u64..10_000) {
        let data = random_logistic(50, 6, seed);
        let lmax = logistic_lambda_max(&data);
        let norms: Vec<f64> = [0.05, 0.2, 0.5, 0.9]
            .iter()
            .map(|f| {
                let fit = fit_sparse_logistic(&data, f * lmax, &SolverOptions::default()).unwrap();
                fit.coefficients.iter().map(|b| b.abs()).sum::<f64>()
            })
            .collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{:?}", norms);
    }

    #[test]
    fn weighted_lasso_satisfies_kkt(seed in 0u64..10_000, frac in 0.01f64..1.1) {
        let problem = random_weighted_lasso(30, 5, seed, frac);
        let fit = fit_weighted_lasso(&problem, &SolverOptions::default()).unwrap();
        prop_assert!(weighted_lasso_kkt_residual(&problem, fit.coefficients.as_slice().unwrap()) <= 1e-6);
    }

    #[test]
    fn row_permutation_leaves_fit_unchanged(seed in 0u64..10_000) {
        let data = random_logistic(30, 4, seed);
        let lambda = 0.2 * logistic_lambda_max(&data);
        let mut rows: Vec<usize> = (0..30).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let perm = data.select_rows(&rows);
        let a = fit_sparse_logistic(&data, lambda, &tight()).unwrap();
        let b = fit_sparse_logistic(&perm, lambda, &tight()).unwrap();
        for (u, v) in a.coefficients.iter().zip(b.coefficients.iter()) {
            prop_assert!((u - v).abs() < 1e-7);
        }
    }

    #[test]
    fn log_grid_is_descending_with_exact_ends(lmax in 1e-3f64..10.0, len in 2usize..40) {
        let g = log_grid(lmax, len, 1e-3);
        prop_assert_eq!(g.len(), len);
        prop_assert!((g[0] - lmax).abs() <= 1e-12 * lmax);
        prop_assert!((g[len - 1] - 1e-3 * lmax).abs() <= 1e-9 * lmax);
        prop_assert!(g.windows(2).all(|w| w[1] < w[0]));
    }
}
