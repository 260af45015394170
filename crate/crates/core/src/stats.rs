//! Scalar statistical helpers: logistic link, normal distribution, and the
//! one-sample Kolmogorov-Smirnov test against N(0, 1).

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Logistic function `1 / (1 + e^-t)`, evaluated without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `e^t / (1 + e^t)^2`, the logistic curvature weight.
///
/// Even in `t`, maximal (0.25) at zero, and evaluated through `e^-|t|` so it
/// decays smoothly to zero instead of producing `inf / inf`.
pub fn sigmoid_weight(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    let d = 1.0 + e;
    e / (d * d)
}

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(t)` computed directly, so it stays accurate far out in
/// the tail.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and
/// the standard normal CDF.
pub fn ks_statistic_normal(sample: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            let lo = f - i as f64 / m;
            let hi = (i + 1) as f64 / m - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS distance `d` on `m` observations, with the
/// Stephens small-sample correction.
pub fn ks_pvalue(d: f64, m: usize) -> f64 {
    let sqrt_m = (m as f64).sqrt();
    let lambda = (sqrt_m + 0.12 + 0.11 / sqrt_m) * d;
    kolmogorov_survival(lambda)
}

/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}
