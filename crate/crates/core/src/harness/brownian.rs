//! Fine-resolution Brownian paths and their coarsenings.

use crate::error::{ensure_positive, Error, Result};
use crate::inertial::OuNoise;
use crate::model::InertialModel;
use crate::rng::RngStreamSpec;

use super::exact_steps;

/// Wiener increments on a uniform grid: `steps × dimension`, row-major, each
/// row `N(0, h_fine I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrementGrid {
    horizon: f64,
    h_fine: f64,
    dimension: usize,
    increments: Vec<f64>,
}

impl BrownianIncrementGrid {
    pub fn from_increments(horizon: f64, h_fine: f64, dimension: usize, increments: Vec<f64>) -> Result<Self> {
        ensure_positive("horizon", horizon)?;
        ensure_positive("h_fine", h_fine)?;
        let steps = exact_steps(horizon, h_fine)
            .ok_or_else(|| Error::Grid(format!("horizon {horizon} is not a multiple of h_fine {h_fine}")))?;
        if dimension == 0 || increments.len() != steps * dimension {
            return Err(Error::Grid(format!(
                "expected {steps} rows of dimension {dimension}, got {} values",
                increments.len()
            )));
        }
        Ok(Self {
            horizon,
            h_fine,
            dimension,
            increments,
        })
    }

    /// A path with every increment zero.
    pub fn zeros(horizon: f64, h_fine: f64, dimension: usize) -> Result<Self> {
        let steps = exact_steps(horizon, h_fine)
            .ok_or_else(|| Error::Grid(format!("horizon {horizon} is not a multiple of h_fine {h_fine}")))?;
        Self::from_increments(horizon, h_fine, dimension, vec![0.0; steps * dimension])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn h_fine(&self) -> f64 {
        self.h_fine
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.dimension
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dimension..(i + 1) * self.dimension]
    }

    /// `W(T) - W(0)`.
    pub fn terminal_value(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dimension];
        for i in 0..self.steps() {
            for (a, b) in w.iter_mut().zip(self.row(i)) {
                *a += b;
            }
        }
        w
    }

    /// Grid of step `factor · h_fine` with summed increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::Grid(format!("factor {factor} does not divide {} steps", self.steps())));
        }
        let coarse_steps = self.steps() / factor;
        let mut increments = vec![0.0; coarse_steps * self.dimension];
        for (k, out) in increments.chunks_exact_mut(self.dimension).enumerate() {
            self.sum_rows_into(k * factor, (k + 1) * factor, out);
        }
        Ok(Self {
            horizon: self.horizon,
            h_fine: self.h_fine * factor as f64,
            dimension: self.dimension,
            increments,
        })
    }

    /// Fine-row count spanned by a step of size `h`.
    pub(crate) fn factor_for(&self, h: f64) -> Result<usize> {
        match exact_steps(h, self.h_fine) {
            Some(f) if f >= 1 => Ok(f),
            _ => Err(Error::Grid(format!("step {h} is not a multiple of h_fine {}", self.h_fine))),
        }
    }

    pub(crate) fn index_of(&self, t: f64) -> Result<usize> {
        match exact_steps(t, self.h_fine) {
            Some(i) if i <= self.steps() => Ok(i),
            _ => Err(Error::Grid(format!("time {t} is not on the grid of step {}", self.h_fine))),
        }
    }

    /// Sum of rows `start..end` into `out`, by pairwise halving so that a
    /// block of even length is exactly the sum of its two halves.
    pub(crate) fn sum_rows_into(&self, start: usize, end: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.pairwise(start, end, j);
        }
    }

    fn pairwise(&self, start: usize, end: usize, j: usize) -> f64 {
        let len = end - start;
        if len == 0 {
            0.0
        } else if len % 2 == 1 {
            (start..end).map(|i| self.increments[i * self.dimension + j]).sum()
        } else {
            let mid = start + len / 2;
            self.pairwise(start, mid, j) + self.pairwise(mid, end, j)
        }
    }

    /// `sqrt(2γ/β) Σ_i e^{-γ(t_end - s_i)/m} ΔW_i` over rows `start..end`,
    /// where `s_i` is the left end of row `i` and `t_end = end · h_fine`.
    pub(crate) fn ou_sum_into(&self, model: &InertialModel, start: usize, end: usize, out: &mut [f64]) {
        let scale = (2.0 * model.gamma() / model.beta()).sqrt();
        let rate: Vec<f64> = model.mass().iter().map(|m| model.gamma() * self.h_fine / m).collect();
        out.fill(0.0);
        for i in start..end {
            let lag = (end - i) as f64;
            for ((a, b), r) in out.iter_mut().zip(self.row(i)).zip(&rate) {
                *a += (-r * lag).exp() * b;
            }
        }
        for a in out.iter_mut() {
            *a *= scale;
        }
    }
}

/// Draws a path of `round(horizon / h_fine)` i.i.d. `N(0, h_fine I)` rows from
/// the stream `spec`.
pub fn generate_brownian_grid(horizon: f64, h_fine: f64, dimension: usize, spec: RngStreamSpec) -> Result<BrownianIncrementGrid> {
    ensure_positive("horizon", horizon)?;
    ensure_positive("h_fine", h_fine)?;
    let steps = exact_steps(horizon, h_fine)
        .ok_or_else(|| Error::Grid(format!("horizon {horizon} is not a multiple of h_fine {h_fine}")))?;
    let sd = h_fine.sqrt();
    let mut stream = spec.open();
    let increments = (0..steps * dimension).map(|_| sd * stream.normal()).collect();
    BrownianIncrementGrid::from_increments(horizon, h_fine, dimension, increments)
}

/// `W((k+1)h) - W(kh)`, the sum of the fine rows spanning `[kh, (k+1)h)`.
pub fn coarse_increment(grid: &BrownianIncrementGrid, h: f64, k: usize) -> Result<Vec<f64>> {
    let factor = grid.factor_for(h)?;
    let len = grid.steps() / factor;
    if k >= len {
        return Err(Error::IndexOutOfRange { index: k, len });
    }
    let mut out = vec![0.0; grid.dimension()];
    grid.sum_rows_into(k * factor, (k + 1) * factor, &mut out);
    Ok(out)
}

/// Left-point discretization of `sqrt(2γ/β) ∫_a^b e^{-γM⁻¹(b-s)} dW(s)` on the
/// fine grid. Both endpoints must be grid points.
pub fn coarse_ou_integral(grid: &BrownianIncrementGrid, model: &InertialModel, a: f64, b: f64) -> Result<OuNoise> {
    if model.dimension() != grid.dimension() {
        return Err(Error::DimensionMismatch {
            expected: grid.dimension(),
            found: model.dimension(),
        });
    }
    let start = grid.index_of(a)?;
    let end = grid.index_of(b)?;
    if end < start {
        return Err(Error::Grid(format!("interval [{a}, {b}) is reversed")));
    }
    let mut xi = vec![0.0; grid.dimension()];
    grid.ou_sum_into(model, start, end, &mut xi);
    Ok(OuNoise::new(xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inertial::ou_variance;
    use crate::model::{PotentialKind, PotentialModel};
    use crate::rng::StreamRole;
    use approx::assert_abs_diff_eq;

    fn spec(stream: u64) -> RngStreamSpec {
        RngStreamSpec::new(99, stream, StreamRole::Brownian)
    }

    fn unit_model(gamma: f64) -> InertialModel {
        InertialModel::with_unit_mass(PotentialModel::new(PotentialKind::Zero, 1, 1.0).unwrap(), gamma).unwrap()
    }

    #[test]
    fn grid_shape_and_determinism() {
        let g = generate_brownian_grid(1.0, 1.0 / 64.0, 2, spec(0)).unwrap();
        assert_eq!(g.steps(), 64);
        assert_eq!(g, generate_brownian_grid(1.0, 1.0 / 64.0, 2, spec(0)).unwrap());
        assert!(generate_brownian_grid(1.0, 0.3, 1, spec(0)).is_err());
        assert!(generate_brownian_grid(1.0, 0.1, 1, spec(0)).is_ok());
    }

    #[test]
    fn coarsen_identity_and_nesting() {
        let g = generate_brownian_grid(1.0, 1.0 / 64.0, 1, spec(1)).unwrap();
        assert_eq!(g.coarsen(1).unwrap(), g);
        let h = 1.0 / 8.0;
        for k in 0..8 {
            let c = coarse_increment(&g, h, k).unwrap();
            let a = coarse_increment(&g, h / 2.0, 2 * k).unwrap();
            let b = coarse_increment(&g, h / 2.0, 2 * k + 1).unwrap();
            assert_eq!(c[0], a[0] + b[0]);
        }
        assert_eq!(coarse_increment(&g, 1.0 / 64.0, 5).unwrap(), g.row(5).to_vec());
        let c = g.coarsen(8).unwrap();
        assert_eq!(c.row(3)[0], coarse_increment(&g, h, 3).unwrap()[0]);
        assert!(coarse_increment(&g, h, 8).is_err());
        assert!(coarse_increment(&g, 0.1, 0).is_err());
    }

    #[test]
    fn telescoping() {
        let g = generate_brownian_grid(2.0, 1.0 / 128.0, 1, spec(2)).unwrap();
        let total: f64 = (0..16).map(|k| coarse_increment(&g, 0.125, k).unwrap()[0]).sum();
        assert_abs_diff_eq!(total, g.terminal_value()[0], epsilon = 1e-13);
    }

    #[test]
    fn terminal_variance_scales_with_horizon() {
        let n = 10_000;
        let t = 2.0;
        let var = (0..n)
            .map(|s| generate_brownian_grid(t, 1.0 / 16.0, 1, spec(s)).unwrap().terminal_value()[0].powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var / t - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn ou_integral_single_row_and_vanishing_friction() {
        let g = generate_brownian_grid(1.0, 1.0 / 32.0, 1, spec(3)).unwrap();
        let m = unit_model(1.0);
        let xi = coarse_ou_integral(&g, &m, 3.0 / 32.0, 4.0 / 32.0).unwrap();
        assert_abs_diff_eq!(xi.xi[0], 2f64.sqrt() * (-1.0f64 / 32.0).exp() * g.row(3)[0], epsilon = 1e-15);

        let tiny = unit_model(1e-14);
        let xi = coarse_ou_integral(&g, &tiny, 0.0, 1.0).unwrap();
        assert!(xi.xi[0].abs() < 1e-6);
        assert!(coarse_ou_integral(&g, &m, 0.01, 0.5).is_err());
    }

    #[test]
    fn ou_integral_variance_matches_isometry() {
        let m = unit_model(1.0);
        let n = 100_000;
        let var = (0..n)
            .map(|s| {
                let g = generate_brownian_grid(0.1, 0.1 / 64.0, 1, spec(1_000_000 + s)).unwrap();
                coarse_ou_integral(&g, &m, 0.0, 0.1).unwrap().xi[0].powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let expected = ou_variance(&m, 0.1)[0];
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }
}
