//! CRT-logit: conditional randomization testing for high-dimensional sparse
//! logistic regression with false discovery rate control.
//!
//! The crate is organised as
//!
//! * [`solvers`]: l1-penalized logistic regression, weighted lasso and
//!   cross-validation;
//! * [`inference`]: the CRT-logit procedure (screening, distillation,
//!   decorrelated score statistic, p-values);
//! * [`baselines`]: distilled CRT, the original resampling CRT and the
//!   holdout randomization test;
//! * [`multiple_testing`]: Benjamini-Hochberg / Benjamini-Yekutieli selection
//!   and scoring against a known support;
//! * [`simulation`]: synthetic Toeplitz designs and the replicated
//!   experiments built on them.
//!
//! Models carry no intercept; designs are assumed centred.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod inference;
pub mod multiple_testing;
pub mod rng;
pub mod simulation;
pub mod solvers;
pub mod stats;

pub use data::{Columns, Dataset, Design};
pub use error::{Error, Result};
