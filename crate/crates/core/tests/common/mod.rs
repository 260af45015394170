#![allow(dead_code)]

use crt_logit::solvers::{logistic_gradient, logistic_objective, SolverOptions, WeightedLassoProblem};
use crt_logit::Dataset;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian design with a logistic response from a sparse coefficient
/// vector; both classes are guaranteed to appear.
pub fn random_logistic(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = Array2::from_shape_simple_fn((n, p), || normal(&mut r));
    let beta: Vec<f64> = (0..p)
        .map(|k| if k % 3 == 0 { r.random_range(-1.5..1.5) } else { 0.0 })
        .collect();
    let mut y: Array1<f64> = (0..n)
        .map(|i| {
            let eta: f64 = (0..p).map(|k| x[[i, k]] * beta[k]).sum();
            let prob = 1.0 / (1.0 + (-eta).exp());
            if r.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    y[0] = 0.0;
    y[1] = 1.0;
    Dataset::new(x.view(), y).unwrap()
}

pub fn random_weighted_lasso(n: usize, q: usize, seed: u64, lambda_frac: f64) -> WeightedLassoProblem {
    let mut r = rng(seed);
    let p = Array2::from_shape_simple_fn((n, q), || normal(&mut r));
    let t: Array1<f64> = (0..n)
        .map(|i| 0.8 * p[[i, 0]] - 0.5 * p[[i, q - 1]] + normal(&mut r) * 0.7)
        .collect();
    let w: Array1<f64> = (0..n).map(|_| r.random_range(0.02..0.25)).collect();
    let base = WeightedLassoProblem::new(t, p, w, 0.0).unwrap();
    let lambda = lambda_frac * base.lambda_max();
    base.with_lambda(lambda)
}

/// Largest violation of the logistic lasso optimality conditions.
pub fn logistic_kkt_violation(data: &Dataset, beta: &[f64], lambda: f64) -> f64 {
    let g = logistic_gradient(data, beta);
    g.iter()
        .zip(beta)
        .map(|(&gk, &b)| {
            if b != 0.0 {
                (gk + lambda * b.signum()).abs()
            } else {
                (gk.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimum of the penalized logistic objective over the grid
/// `[-3, 3]^2` with the given step, for a two-column design.
pub fn brute_force_two_dim(data: &Dataset, lambda: f64, step: f64) -> (f64, [f64; 2]) {
    assert_eq!(data.p(), 2);
    let n = data.n();
    let x = data.x();
    let rows: Vec<(f64, f64, f64)> = (0..n).map(|i| (x.get(i, 0), x.get(i, 1), data.y()[i])).collect();
    let m = (6.0 / step).round() as i64;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for a in 0..=m {
        let b0 = -3.0 + a as f64 * step;
        for b in 0..=m {
            let b1 = -3.0 + b as f64 * step;
            let mut loss = 0.0;
            for &(x0, x1, y) in &rows {
                let eta = x0 * b0 + x1 * b1;
                let sp = if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                loss += sp - y * eta;
            }
            let obj = loss / n as f64 + lambda * (b0.abs() + b1.abs());
            if obj < best.0 {
                best = (obj, [b0, b1]);
            }
        }
    }
    best
}

/// Largest relative difference between the analytic gradient and central
/// differences of the unpenalized objective.
pub fn gradient_fd_error(data: &Dataset, beta: &[f64]) -> f64 {
    let g = logistic_gradient(data, beta);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..beta.len() {
        let mut up = beta.to_vec();
        let mut down = beta.to_vec();
        up[k] += h;
        down[k] -= h;
        let fd = (logistic_objective(data, &up, 0.0) - logistic_objective(data, &down, 0.0)) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1e-3));
    }
    worst
}

/// Orthogonal design with `P'P / n = I / 2` so the weighted lasso with unit
/// weights separates per coordinate: `b_k = S(2 P_k't / n, lambda)`.
pub fn orthogonal_problem(n: usize, q: usize, lambda: f64, seed: u64) -> (WeightedLassoProblem, Vec<f64>) {
    assert_eq!(n % q, 0);
    let mut r = rng(seed);
    // disjoint supports make the columns orthogonal
    let mut p = Array2::<f64>::zeros((n, q));
    let block = n / q;
    for k in 0..q {
        for i in 0..block {
            p[[k * block + i, k]] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    for k in 0..q {
        let norm2: f64 = p.column(k).iter().map(|v| v * v).sum();
        let scale = (n as f64 / (2.0 * norm2)).sqrt();
        p.column_mut(k).mapv_inplace(|v| v * scale);
    }
    let t: Array1<f64> = (0..n).map(|_| 2.0 * r.random::<f64>() - 1.0 + 0.3).collect();
    let expected: Vec<f64> = (0..q)
        .map(|k| {
            let z: f64 = 2.0 * p.column(k).iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            // per coordinate: b^2 / 2 - z b + lambda |b|
            let s = z.abs() - lambda;
            if s > 0.0 {
                z.signum() * s
            } else {
                0.0
            }
        })
        .collect();
    let w = Array1::ones(n);
    (
        WeightedLassoProblem::with_unbounded_weights(t, p, w, lambda).unwrap(),
        expected,
    )
}

pub fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-12,
        max_iter: 100_000,
    }
}

/// Step-up selection by definition, for cross-checking.
pub fn naive_step_up(p: &[f64], alpha: f64, c: f64) -> Vec<usize> {
    let m = p.len();
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cutoff = None;
    for k in 1..=m {
        if sorted[k - 1] <= k as f64 * alpha / (m as f64 * c) {
            cutoff = Some(sorted[k - 1]);
        }
    }
    match cutoff {
        Some(c) if alpha > 0.0 => (0..m).filter(|&j| p[j] <= c).collect(),
        _ => Vec::new(),
    }
}
