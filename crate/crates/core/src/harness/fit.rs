//! Log–log least squares for convergence orders.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// `log y ≈ intercept + slope · log h`, with the 95% confidence half-width of
/// the slope from the residual variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
}

pub fn fit_order(h: &[f64], y: &[f64]) -> Result<OrderFit> {
    if h.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            found: y.len(),
        });
    }
    if h.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, found: h.len() });
    }
    for (name, v) in [("step size", h), ("error", y)] {
        if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "fit input",
                reason: format!("{name} {bad} is not positive and finite"),
            });
        }
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("step size", "all step sizes are equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = n - 2.0;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::invalid("fit input", e.to_string()))?
        .inverse_cdf(0.975);
    let half_width = t * (rss / dof / sxx).sqrt();
    Ok(OrderFit {
        slope,
        intercept,
        half_width,
    })
}
