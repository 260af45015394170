//! Dense design matrices and labelled datasets.
//!
//! Designs are stored column-major so that coordinate-descent solvers can
//! stream a single column as a contiguous slice.

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};

/// Read access to the columns of an `n x p` matrix.
pub trait Columns: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn col(&self, k: usize) -> &[f64];

    /// `out <- X beta`, skipping zero coefficients.
    fn mul_into(&self, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (o, &x) in out.iter_mut().zip(self.col(k)) {
                    *o += x * b;
                }
            }
        }
    }
}

/// Column-major `n x p` real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    values: Array2<f64>,
}

impl Design {
    /// Copies `x` (any memory layout) into column-major storage.
    pub fn new(x: ArrayView2<'_, f64>) -> Self {
        let (n, p) = x.dim();
        let mut values = Array2::zeros((n, p).f());
        values.assign(&x);
        Design { values }
    }

    pub fn from_columns(n: usize, columns: &[Vec<f64>]) -> Self {
        let p = columns.len();
        let mut flat = Vec::with_capacity(n * p);
        for c in columns {
            assert_eq!(c.len(), n, "column length mismatch");
            flat.extend_from_slice(c);
        }
        let values = Array2::from_shape_vec((n, p).f(), flat).expect("shape matches");
        Design { values }
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[[i, k]]
    }

    /// New design holding only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        let p = self.n_cols();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for k in 0..p {
            let c = self.col(k);
            flat.extend(rows.iter().map(|&i| c[i]));
        }
        let values = Array2::from_shape_vec((rows.len(), p).f(), flat).expect("shape matches");
        Design { values }
    }

    /// Row `i` as an owned vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).to_vec()
    }
}

impl Columns for Design {
    fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    fn col(&self, k: usize) -> &[f64] {
        self.values
            .column(k)
            .to_slice()
            .expect("column-major storage is contiguous per column")
    }
}

/// A design whose column `index` is replaced by another vector.
pub struct ReplacedColumn<'a> {
    pub base: &'a Design,
    pub index: usize,
    pub column: &'a [f64],
}

impl Columns for ReplacedColumn<'_> {
    fn n_rows(&self) -> usize {
        self.base.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.base.n_cols()
    }

    fn col(&self, k: usize) -> &[f64] {
        if k == self.index {
            self.column
        } else {
            self.base.col(k)
        }
    }
}

/// Design matrix plus binary response.
///
/// Invariants: `n >= 2`, `p >= 1`, every response is exactly 0 or 1 and the
/// design is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Design,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: ArrayView2<'_, f64>, y: Array1<f64>) -> Result<Self> {
        Self::from_design(Design::new(x), y)
    }

    pub fn from_design(x: Design, y: Array1<f64>) -> Result<Self> {
        let (n, p) = (x.n_rows(), x.n_cols());
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
        }
        if p < 1 {
            return Err(Error::invalid("need at least one variable"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!(
                "response has {} entries but design has {n} rows",
                y.len()
            )));
        }
        if let Some(pos) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!(
                "response entry {pos} is {} (expected 0 or 1)",
                y[pos]
            )));
        }
        if let Some(pos) = x.view().iter().position(|v| !v.is_finite()) {
            let (i, k) = (pos / p, pos % p);
            return Err(Error::invalid(format!(
                "design contains a non-finite value near row {i}, column {k}"
            )));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn p(&self) -> usize {
        self.x.n_cols()
    }

    pub fn x(&self) -> &Design {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice().expect("owned 1-d array is contiguous")
    }

    /// Subset of samples, keeping the row order given.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.y.iter().filter(|&&v| v == 1.0).count();
        (self.n() - ones, ones)
    }
}
