//! Long-chain checks of the invariant measure.

use crate::error::{Error, Result};
use crate::inertial::drive_inertial_chain;
use crate::model::{BlowUp, ChainOptions};
use crate::overdamped::drive_overdamped_chain;
use crate::rng::RngStreamSpec;

use super::equilibrium::EquilibriumSampler;
use super::ks::{ks_distance, normal_cdf};
use super::study::{Method, StudyModel, StudyState};

/// Fraction of the chain discarded before collecting samples.
pub const BURN_IN_FRACTION: f64 = 0.1;

/// Retained samples of one coordinate and their KS distance to its target
/// marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCheck {
    pub name: String,
    pub samples: Vec<f64>,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub steps: usize,
    pub burn_in: usize,
    pub accepted_fraction: f64,
    /// Empty when the chain blew up.
    pub marginals: Vec<MarginalCheck>,
    pub blow_up: Option<BlowUp>,
}

/// Runs one chain of `n_steps`, drops the first 10%, and compares every
/// position (and momentum) coordinate with its exact marginal: the numeric
/// CDF of `exp(-β u)` for positions, `N(0, m/β)` for momenta.
pub fn invariance_check(
    model: &StudyModel,
    method: Method,
    h: f64,
    n_steps: usize,
    start: &StudyState,
    spec: RngStreamSpec,
) -> Result<InvarianceReport> {
    let burn_in = (n_steps as f64 * BURN_IN_FRACTION).floor() as usize;
    if n_steps < burn_in + 1 {
        return Err(Error::invalid("n_steps", "nothing left after burn-in"));
    }
    let n = model.dimension();
    let kept = n_steps - burn_in;
    let width = if model.is_inertial() { 2 * n } else { n };
    let mut columns: Vec<Vec<f64>> = (0..width).map(|_| Vec::with_capacity(kept)).collect();
    let mut accepted = 0usize;
    let options = ChainOptions::default();
    let blow_up = match (model, start) {
        (StudyModel::Overdamped(m), StudyState::Overdamped(s)) => {
            let om = method.overdamped().ok_or_else(|| Error::invalid("method", "not an overdamped method"))?;
            drive_overdamped_chain(m, om, &s.x, h, n_steps, spec, options, |k, o| {
                accepted += o.accepted as usize;
                if k >= burn_in {
                    for (c, v) in columns.iter_mut().zip(&o.state.x) {
                        c.push(*v);
                    }
                }
            })?
        }
        (StudyModel::Inertial(m), StudyState::Phase(s)) => {
            let im = method.inertial().ok_or_else(|| Error::invalid("method", "not an inertial method"))?;
            drive_inertial_chain(m, im, s, h, n_steps, spec, options, |k, o| {
                accepted += o.accepted as usize;
                if k >= burn_in {
                    for (c, v) in columns.iter_mut().zip(o.state.q.iter().chain(&o.state.p)) {
                        c.push(*v);
                    }
                }
            })?
        }
        _ => return Err(Error::invalid("initial state", "state kind does not match the model")),
    };
    let mut report = InvarianceReport {
        steps: n_steps,
        burn_in,
        accepted_fraction: accepted as f64 / n_steps as f64,
        marginals: Vec::new(),
        blow_up,
    };
    if blow_up.is_some() {
        return Ok(report);
    }
    let sampler = EquilibriumSampler::new(model.potential())?;
    let position = if model.is_inertial() { "q" } else { "x" };
    for (i, samples) in columns.into_iter().enumerate() {
        let (name, ks) = if i < n {
            (format!("{position}{i}"), ks_distance(&samples, |x| sampler.cdf(x))?)
        } else {
            let StudyModel::Inertial(m) = model else { unreachable!() };
            let sd = (m.mass()[i - n] / m.beta()).sqrt();
            (format!("p{}", i - n), ks_distance(&samples, |x| normal_cdf(x, 0.0, sd))?)
        };
        report.marginals.push(MarginalCheck { name, samples, ks });
    }
    Ok(report)
}
