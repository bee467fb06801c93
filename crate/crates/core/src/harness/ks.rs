//! Kolmogorov–Smirnov distance.

use crate::error::{Error, Result};

/// `sup_x |F_n(x) - F(x)|` for the empirical CDF `F_n` of `samples`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, found: 0 });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("KS sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// CDF of `N(mean, sd²)`.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return f64::NAN;
    }
    0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}
