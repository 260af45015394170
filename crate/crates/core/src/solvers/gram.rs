use ndarray::{Array2, Axis};

use super::{soft_threshold, SolverOptions};
use crate::data::{Columns, Design};

/// Scaled weighted Gram matrix `M = (2/n) Z' W Z` of an `n x q` matrix `Z`.
///
/// Regressing column `t` of `Z` on the remaining columns under the weighted
/// lasso objective only needs `M`: with `e = unit_t - b` the smooth part is
/// `(1/n) sum_i w_i (Z e)_i^2 = e' M e / 2`. One matrix therefore serves the
/// distillation of every column, and coordinate updates cost `O(q)` instead
/// of `O(n)`.
#[derive(Debug, Clone)]
pub struct WeightedGram {
    matrix: Array2<f64>,
    n: usize,
}

impl WeightedGram {
    pub fn new(z: &Design, weights: &[f64]) -> Self {
        let rows: Vec<usize> = (0..z.n_rows()).collect();
        Self::from_rows(z, weights, &rows)
    }

    /// Gram matrix of the sub-sample `rows` (weights indexed like `z`'s rows).
    pub fn from_rows(z: &Design, weights: &[f64], rows: &[usize]) -> Self {
        let q = z.n_cols();
        let m = rows.len();
        let mut scaled = Array2::<f64>::zeros((m, q));
        for k in 0..q {
            let col = z.col(k);
            for (r, &i) in rows.iter().enumerate() {
                scaled[[r, k]] = col[i] * weights[i].sqrt();
            }
        }
        let mut matrix = scaled.t().dot(&scaled);
        matrix *= 2.0 / m as f64;
        symmetrize(&mut matrix);
        WeightedGram { matrix, n: m }
    }

    /// Gram matrix of the rows in `full` but not in `part`, where `part` was
    /// built from a subset of `full`'s rows.
    pub fn complement(full: &WeightedGram, part: &WeightedGram) -> Self {
        let n = full.n - part.n;
        assert!(n > 0, "complement of the full sample is empty");
        let a = full.n as f64 / n as f64;
        let b = part.n as f64 / n as f64;
        let mut matrix = &full.matrix * a - &part.matrix * b;
        symmetrize(&mut matrix);
        WeightedGram { matrix, n }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max_{k != t} |M_kt|`.
    pub fn lambda_max(&self, target: usize) -> f64 {
        self.matrix
            .row(target)
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != target)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// `(1/n) sum_i w_i (z_it - sum_{k != t} z_ik b_k)^2` over the rows the
    /// matrix was built from. `beta[target]` is ignored.
    pub fn weighted_mse(&self, target: usize, beta: &[f64]) -> f64 {
        let support: Vec<usize> = beta
            .iter()
            .enumerate()
            .filter(|(k, b)| **b != 0.0 && *k != target)
            .map(|(k, _)| k)
            .collect();
        let m = &self.matrix;
        let mut quad = m[[target, target]];
        for &k in &support {
            quad -= 2.0 * m[[target, k]] * beta[k];
            for &l in &support {
                quad += beta[k] * m[[k, l]] * beta[l];
            }
        }
        (0.5 * quad).max(0.0)
    }

    /// Diagonal entry, `(2/n) sum_i w_i z_ik^2`.
    pub fn diag(&self, k: usize) -> f64 {
        self.matrix[[k, k]]
    }

    fn row_slice(&self, k: usize) -> &[f64] {
        self.matrix
            .index_axis(Axis(0), k)
            .to_slice()
            .expect("standard layout rows are contiguous")
    }
}

fn symmetrize(m: &mut Array2<f64>) {
    let q = m.nrows();
    for a in 0..q {
        for b in (a + 1)..q {
            let v = 0.5 * (m[[a, b]] + m[[b, a]]);
            m[[a, b]] = v;
            m[[b, a]] = v;
        }
    }
    if !m.is_standard_layout() {
        *m = m.as_standard_layout().to_owned();
    }
}

/// Weighted lasso of column `target` on all other columns, solved in
/// covariance form. `beta` (length `q`) is the warm start and receives the
/// solution; `beta[target]` is kept at zero.
///
/// Returns `(sweeps, converged)`.
pub fn gram_lasso(
    gram: &WeightedGram,
    target: usize,
    lambda: f64,
    beta: &mut [f64],
    opts: &SolverOptions,
) -> (usize, bool) {
    let q = gram.dim();
    assert_eq!(beta.len(), q);
    beta[target] = 0.0;
    let b = gram.row_slice(target);

    // fitted = M beta, maintained incrementally
    let mut fitted = vec![0.0; q];
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; q];
    for l in 0..q {
        if beta[l] != 0.0 {
            let row = gram.row_slice(l);
            for (f, &m) in fitted.iter_mut().zip(row) {
                *f += m * beta[l];
            }
            active.push(l);
            in_active[l] = true;
        }
    }

    let update = |k: usize, beta: &mut [f64], fitted: &mut [f64]| -> f64 {
        let d = gram.diag(k);
        if d <= 0.0 {
            return 0.0;
        }
        let old = beta[k];
        let z = b[k] - fitted[k] + d * old;
        let new = soft_threshold(z, lambda) / d;
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        for (f, &m) in fitted.iter_mut().zip(gram.row_slice(k)) {
            *f += m * delta;
        }
        beta[k] = new;
        delta.abs()
    };

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_iter {
        let mut max_change: f64 = 0.0;
        for k in 0..q {
            if k == target {
                continue;
            }
            let c = update(k, beta, &mut fitted);
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
                max_change = max_change.max(update(k, beta, &mut fitted));
            }
            sweeps += 1;
            if max_change <= opts.tol {
                break;
            }
        }
    }
    (sweeps, converged)
}
