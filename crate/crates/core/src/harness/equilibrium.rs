//! Inverse-transform sampling from one-dimensional Gibbs densities.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::PotentialModel;
use crate::rng::RandomStream;

use super::quadrature::{adaptive_simpson, gauss_legendre};

const CELLS: usize = 4096;
const MAX_EXTENT: f64 = 1e6;
const TAIL_MASS: f64 = 1e-12;
const PROBABILITY_TOL: f64 = 1e-10;

type LogDensity = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tabulated CDF of `f ∝ exp(log_density)` on a truncated interval `[-L, L]`.
///
/// Cell masses use a Gauss–Legendre rule per cell; partial cells use the same
/// rule on the sub-interval, so `cdf` is continuous and monotone up to
/// quadrature error.
pub struct EquilibriumSampler {
    log_density: LogDensity,
    shift: f64,
    extent: f64,
    width: f64,
    cumulative: Vec<f64>,
    mass: f64,
}

impl fmt::Debug for EquilibriumSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EquilibriumSampler")
            .field("extent", &self.extent)
            .field("mass", &self.mass)
            .finish_non_exhaustive()
    }
}

impl EquilibriumSampler {
    /// Sampler for one coordinate of `exp(-β U)` with a separable `U`.
    pub fn new(model: &PotentialModel) -> Result<Self> {
        let m = model.clone();
        let beta = m.beta();
        Self::from_log_density(move |s| -beta * m.profile_energy(s))
    }

    /// Sampler for `f ∝ exp(log_density)`. Fails if the density does not decay
    /// on both sides before `|x| = 1e6`.
    pub fn from_log_density<F>(log_density: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let (extent, shift) = find_extent(&log_density)?;
        let width = 2.0 * extent / CELLS as f64;
        let density = |x: f64| (log_density(x) - shift).exp();
        let mut cumulative = Vec::with_capacity(CELLS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..CELLS {
            let a = -extent + i as f64 * width;
            acc += gauss_legendre(density, a, a + width);
            cumulative.push(acc);
        }
        if !(acc.is_finite() && acc > 0.0) {
            return Err(Error::NonIntegrable(format!("total mass {acc}")));
        }
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        Ok(Self {
            log_density: Box::new(log_density),
            shift,
            extent,
            width,
            cumulative,
            mass: acc,
        })
    }

    /// Half-width `L` of the truncated support.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// `∫ exp(log_density)` over `[-L, L]`.
    pub fn normalization(&self) -> f64 {
        self.mass * self.shift.exp()
    }

    /// Normalized density.
    pub fn pdf(&self, x: f64) -> f64 {
        if x.abs() > self.extent {
            return 0.0;
        }
        ((self.log_density)(x) - self.shift).exp() / self.mass
    }

    fn cell_of(&self, x: f64) -> usize {
        (((x + self.extent) / self.width) as usize).min(CELLS - 1)
    }

    fn left(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.width
    }

    fn partial(&self, i: usize, x: f64) -> f64 {
        let a = self.left(i);
        if x <= a {
            return 0.0;
        }
        gauss_legendre(|s| ((self.log_density)(s) - self.shift).exp(), a, x) / self.mass
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= -self.extent {
            return 0.0;
        }
        if x >= self.extent {
            return 1.0;
        }
        let i = self.cell_of(x);
        (self.cumulative[i] + self.partial(i, x)).min(1.0)
    }

    /// Inverse CDF by bisection until the bracket spans less than `1e-10` in
    /// probability.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.cumulative.partition_point(|&c| c <= u).clamp(1, CELLS) - 1;
        let (mut lo, mut hi) = (self.left(i), self.left(i + 1));
        let (mut flo, mut fhi) = (self.cumulative[i], self.cumulative[i + 1]);
        while fhi - flo > PROBABILITY_TOL && hi - lo > f64::EPSILON * hi.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            let fm = self.cumulative[i] + self.partial(i, mid);
            if fm <= u {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        self.quantile(stream.uniform())
    }

    /// `E[g]` under the normalized density, by the same per-cell rule.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        (0..CELLS)
            .map(|i| {
                let a = self.left(i);
                gauss_legendre(|s| g(s) * ((self.log_density)(s) - self.shift).exp(), a, a + self.width)
            })
            .sum::<f64>()
            / self.mass
    }
}

/// One draw from the sampler's density.
pub fn equilibrium_sample_1d(sampler: &EquilibriumSampler, stream: &mut RandomStream) -> f64 {
    sampler.sample(stream)
}

/// Grows `L` geometrically until both tails are decreasing, the log density at
/// `±L` is 14 decades below its peak, and the mass beyond `±L` is below
/// `1e-12` of the bulk. Returns `(L, peak log density)`.
fn find_extent<F: Fn(f64) -> f64>(log_density: &F) -> Result<(f64, f64)> {
    let cut = TAIL_MASS.ln() - 4.6;
    let mut extent = 1.0;
    while extent <= MAX_EXTENT {
        let peak = (0..=2000)
            .map(|k| log_density(-extent + extent * k as f64 / 1000.0))
            .fold(f64::NEG_INFINITY, f64::max);
        if peak.is_nan() || peak == f64::INFINITY {
            return Err(Error::NonIntegrable(format!("log density {peak} inside [-{extent}, {extent}]")));
        }
        let edge = |x: f64| log_density(x) - peak;
        let decaying = [-1.0, 1.0].iter().all(|&side: &f64| {
            let here = edge(side * extent);
            here < cut && edge(side * 1.5 * extent) < here && edge(side * 2.0 * extent) < here
        });
        if decaying {
            let f = |x: f64| (log_density(x) - peak).exp();
            let bulk = adaptive_simpson(f, -extent, extent, 1e-10 * extent);
            let tail = adaptive_simpson(f, extent, 4.0 * extent, 1e-16) + adaptive_simpson(f, -4.0 * extent, -extent, 1e-16);
            if tail.is_finite() && bulk > 0.0 && tail <= TAIL_MASS * bulk {
                return Ok((extent, peak));
            }
        }
        extent *= 1.5;
    }
    Err(Error::NonIntegrable(format!("density does not decay within |x| ≤ {MAX_EXTENT}")))
}
