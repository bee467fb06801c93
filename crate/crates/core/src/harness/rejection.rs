//! Step-size scaling of the rejection probability.

use rayon::prelude::*;

use crate::error::{ensure_positive, Error, Result};
use crate::inertial::drive_inertial_chain;
use crate::model::{BlowUp, ChainOptions};
use crate::overdamped::drive_overdamped_chain;
use crate::rng::{RngStreamSpec, StreamRole};

use super::fit::{fit_order, OrderFit};
use super::study::{initial_state, sampler_for, InitialPolicy, Method, StudyModel, StudyState};
use super::with_threads;

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionStudyConfig {
    pub model: StudyModel,
    pub method: Method,
    pub step_sizes: Vec<f64>,
    /// Steps per chain.
    pub n_steps: usize,
    /// Independent chains per step size.
    pub realizations: usize,
    pub initial: InitialPolicy,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl RejectionStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method.is_inertial() != self.model.is_inertial() {
            return Err(Error::invalid("method", format!("{} does not apply to this model", self.method)));
        }
        if self.step_sizes.is_empty() {
            return Err(Error::invalid("step_sizes", "empty list"));
        }
        for h in &self.step_sizes {
            ensure_positive("step size", *h)?;
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        if self.realizations < 2 {
            return Err(Error::invalid("realizations", "need at least 2"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionReport {
    pub step_sizes: Vec<f64>,
    /// Mean of `1 - α` over all steps of all chains.
    pub mean_rejection: Vec<f64>,
    /// Standard error across chains.
    pub stderr: Vec<f64>,
    /// `None` when fewer than three step sizes were run or a rate is zero.
    pub fit: Option<OrderFit>,
    pub realizations: usize,
    pub n_steps: usize,
}

/// Mean `1 - α` along one chain.
fn chain_rejection(model: &StudyModel, method: Method, start: &StudyState, h: f64, n_steps: usize, spec: RngStreamSpec) -> Result<std::result::Result<f64, BlowUp>> {
    let mut acc = 0.0;
    let options = ChainOptions::default();
    let blow_up = match (model, start) {
        (StudyModel::Overdamped(m), StudyState::Overdamped(s)) => {
            let om = method.overdamped().ok_or_else(|| Error::invalid("method", "not an overdamped method"))?;
            drive_overdamped_chain(m, om, &s.x, h, n_steps, spec, options, |_, o| acc += 1.0 - o.acceptance)?
        }
        (StudyModel::Inertial(m), StudyState::Phase(s)) => {
            let im = method.inertial().ok_or_else(|| Error::invalid("method", "not an inertial method"))?;
            drive_inertial_chain(m, im, s, h, n_steps, spec, options, |_, o| acc += 1.0 - o.acceptance)?
        }
        _ => return Err(Error::invalid("initial state", "state kind does not match the model")),
    };
    Ok(match blow_up {
        Some(b) => Err(b),
        None => Ok(acc / n_steps as f64),
    })
}

/// Runs one chain per (realization, step size). All step sizes of a
/// realization share its starting point and random streams.
pub fn rejection_rate_study(config: &RejectionStudyConfig) -> Result<RejectionReport> {
    config.validate()?;
    let sampler = sampler_for(&config.model, &config.initial)?;
    let per_chain: Vec<Result<Vec<f64>>> = with_threads(config.threads, || {
        (0..config.realizations)
            .into_par_iter()
            .map(|r| {
                let spec = RngStreamSpec::new(config.seed, r as u64, StreamRole::Brownian);
                let mut init = spec.with_role(StreamRole::InitialCondition).open();
                let start = initial_state(&config.model, &config.initial, None, sampler.as_ref(), &mut init)?;
                config
                    .step_sizes
                    .iter()
                    .map(|&h| match chain_rejection(&config.model, config.method, &start, h, config.n_steps, spec)? {
                        Ok(rate) => Ok(rate),
                        Err(b) => Err(Error::StudyAborted {
                            reason: format!("chain {r} at h = {h} blew up at step {} (|x| = {})", b.step, b.magnitude),
                            discarded: 1,
                            total: config.realizations,
                        }),
                    })
                    .collect()
            })
            .collect()
    })?;

    let k = config.step_sizes.len();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for rates in per_chain {
        for (j, v) in rates?.into_iter().enumerate() {
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    let n = config.realizations as f64;
    let mean_rejection: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr = (0..k)
        .map(|j| {
            let m = mean_rejection[j];
            (((sum_sq[j] / n - m * m) * n / (n - 1.0)).max(0.0) / n).sqrt()
        })
        .collect();
    let fit = if k >= 3 && mean_rejection.iter().all(|&v| v > 0.0) {
        Some(fit_order(&config.step_sizes, &mean_rejection)?)
    } else {
        None
    };
    Ok(RejectionReport {
        step_sizes: config.step_sizes.clone(),
        mean_rejection,
        stderr,
        fit,
        realizations: config.realizations,
        n_steps: config.n_steps,
    })
}
