//! Overdamped chains: ULA, MALA and MALTA.
//!
//! All three share the Euler–Maruyama proposal
//! `x* = x - h b(x) + sqrt(2/β) ΔW`, with `b = ∇U` for ULA/MALA and the
//! truncated drift `∇U / (1 ∨ h|∇U|)` for MALTA. ULA always moves; the other
//! two accept with the Metropolis–Hastings probability and otherwise stay put.
//!
//! Brownian increments are always supplied by the caller, which lets a
//! convergence study drive the chain and its reference with the same path.

use std::f64::consts::PI;

use crate::error::{ensure_len, ensure_positive, Error, Result};
use crate::linalg::{self, norm_sq};
use crate::model::{BlowUp, ChainOptions, ChainTrace, OverdampedState, PotentialModel, StepOutcome};
use crate::rng::{RngStreamSpec, StreamRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverdampedMethod {
    Ula,
    Mala,
    Malta,
}

impl OverdampedMethod {
    pub fn tag(self) -> &'static str {
        match self {
            OverdampedMethod::Ula => "ula",
            OverdampedMethod::Mala => "mala",
            OverdampedMethod::Malta => "malta",
        }
    }

    pub fn is_metropolized(self) -> bool {
        !matches!(self, OverdampedMethod::Ula)
    }
}

/// Everything one overdamped step consumes.
#[derive(Debug, Clone, Copy)]
pub struct OverdampedStepInput<'a> {
    pub state: &'a OverdampedState,
    pub h: f64,
    /// Brownian increment over the step; each component has variance `h`.
    pub dw: &'a [f64],
    /// Metropolis uniform on `[0, 1)`; required by MALA and MALTA.
    pub zeta: Option<f64>,
}

impl OverdampedStepInput<'_> {
    fn validate(&self, model: &PotentialModel) -> Result<()> {
        ensure_positive("h", self.h)?;
        ensure_len(model.dimension(), &self.state.x)?;
        ensure_len(model.dimension(), self.dw)?;
        if let Some(z) = self.zeta {
            if !(0.0..1.0).contains(&z) {
                return Err(Error::invalid("zeta", format!("must lie in [0, 1), got {z}")));
            }
        }
        Ok(())
    }

    fn require_zeta(&self) -> Result<f64> {
        self.zeta
            .ok_or_else(|| Error::invalid("zeta", "Metropolized step needs a uniform"))
    }
}

/// Strict `ζ < α`, evaluated in log space only when `α` underflows.
pub(crate) fn metropolis_accepts(zeta: f64, log_alpha: f64) -> bool {
    let alpha = log_alpha.exp();
    if alpha > 0.0 {
        zeta < alpha
    } else {
        zeta.ln() < log_alpha
    }
}

/// `min(0, r)`, mapping NaN (an undefined ratio) to certain rejection.
pub(crate) fn cap_log_ratio(r: f64) -> f64 {
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r.min(0.0)
    }
}

fn noise_scale(model: &PotentialModel) -> f64 {
    (2.0 / model.beta()).sqrt()
}

fn propose(x: &[f64], drift: &[f64], dw: &[f64], sigma: f64) -> Vec<f64> {
    x.iter()
        .zip(drift)
        .zip(dw)
        .map(|((xi, di), wi)| xi - di + sigma * wi)
        .collect()
}

/// Euler–Maruyama update `x - h∇U(x) + sqrt(2/β) ΔW`.
pub fn ula_step(model: &PotentialModel, input: OverdampedStepInput<'_>) -> Result<OverdampedState> {
    input.validate(model)?;
    let drift: Vec<f64> = model.gradient(&input.state.x).iter().map(|g| input.h * g).collect();
    let y = propose(&input.state.x, &drift, input.dw, noise_scale(model));
    if linalg::all_finite(&y) {
        Ok(OverdampedState::new(y))
    } else {
        Err(Error::NonFinite("ULA update"))
    }
}

/// Log of the Gaussian transition density of one Euler–Maruyama step with
/// drift `drift(x)`, mean `x - drift`, covariance `2h/β · I`.
fn gaussian_step_log_density(model: &PotentialModel, x: &[f64], y: &[f64], drift: &[f64], h: f64) -> f64 {
    let n = x.len() as f64;
    let var2 = 4.0 * h / model.beta();
    let r2: f64 = x
        .iter()
        .zip(y)
        .zip(drift)
        .map(|((xi, yi), di)| {
            let r = yi - xi + di;
            r * r
        })
        .sum();
    -0.5 * n * (PI * var2).ln() - r2 / var2
}

/// `log q_h(x, y)` for the ULA kernel.
pub fn ula_log_density(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    ensure_positive("h", h)?;
    ensure_len(model.dimension(), x)?;
    ensure_len(model.dimension(), y)?;
    let drift: Vec<f64> = model.gradient(x).iter().map(|g| h * g).collect();
    Ok(gaussian_step_log_density(model, x, y, &drift, h))
}

/// The function `G(x, y)` with `q_h(y,x)π(y) / (q_h(x,y)π(x)) = exp(-βG)`:
///
/// `G = U(y) - U(x) - ½⟨∇U(y) + ∇U(x), y - x⟩ + (h/4)(|∇U(y)|² - |∇U(x)|²)`.
pub fn mala_log_ratio_g(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> f64 {
    let gx = model.gradient(x);
    let gy = model.gradient(y);
    let cross: f64 = gx
        .iter()
        .zip(&gy)
        .zip(x.iter().zip(y))
        .map(|((a, b), (xi, yi))| (a + b) * (yi - xi))
        .sum();
    model.energy(y) - model.energy(x) - 0.5 * cross + 0.25 * h * (norm_sq(&gy) - norm_sq(&gx))
}

/// `log α_h(x, y) = min(0, -βG(x, y))`.
pub fn mala_log_acceptance(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> f64 {
    cap_log_ratio(-model.beta() * mala_log_ratio_g(model, x, y, h))
}

/// Same quantity as [`mala_log_acceptance`], assembled from the explicit
/// transition densities and the unnormalized target.
pub fn mala_log_acceptance_via_densities(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    let forward = ula_log_density(model, x, y, h)?;
    let backward = ula_log_density(model, y, x, h)?;
    Ok(cap_log_ratio(model.log_target(y) + backward - model.log_target(x) - forward))
}

pub fn mala_acceptance(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> f64 {
    mala_log_acceptance(model, x, y, h).exp()
}

pub fn mala_step(model: &PotentialModel, input: OverdampedStepInput<'_>) -> Result<StepOutcome<OverdampedState>> {
    input.validate(model)?;
    let zeta = input.require_zeta()?;
    let x = &input.state.x;
    let drift: Vec<f64> = model.gradient(x).iter().map(|g| input.h * g).collect();
    let proposal = OverdampedState::new(propose(x, &drift, input.dw, noise_scale(model)));
    let log_alpha = if proposal.is_finite() {
        mala_log_acceptance(model, x, &proposal.x, input.h)
    } else {
        f64::NEG_INFINITY
    };
    Ok(finish(input.state, proposal, zeta, log_alpha))
}

fn finish(state: &OverdampedState, proposal: OverdampedState, zeta: f64, log_alpha: f64) -> StepOutcome<OverdampedState> {
    let accepted = metropolis_accepts(zeta, log_alpha);
    StepOutcome {
        state: if accepted { proposal.clone() } else { state.clone() },
        proposal,
        acceptance: log_alpha.exp(),
        accepted,
    }
}

/// Truncated drift `h∇U(x) / (1 ∨ h|∇U(x)|)`; its norm never exceeds one.
pub fn malta_drift_term(model: &PotentialModel, x: &[f64], h: f64) -> Vec<f64> {
    let mut d = model.gradient(x);
    for v in d.iter_mut() {
        *v *= h;
    }
    let scale = norm_sq(&d).sqrt().max(1.0);
    for v in d.iter_mut() {
        *v /= scale;
    }
    d
}

/// `log q̃_h(x, y)`: Gaussian centred at `x - malta_drift_term(x)`, covariance `2h/β · I`.
pub fn malta_log_proposal_density(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    ensure_positive("h", h)?;
    ensure_len(model.dimension(), x)?;
    ensure_len(model.dimension(), y)?;
    let drift = malta_drift_term(model, x, h);
    Ok(gaussian_step_log_density(model, x, y, &drift, h))
}

/// MALTA acceptance from the full truncated-proposal density ratio. The `G`
/// shortcut of MALA does not hold once the truncation is active.
pub fn malta_log_acceptance(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    let forward = malta_log_proposal_density(model, x, y, h)?;
    let backward = malta_log_proposal_density(model, y, x, h)?;
    Ok(cap_log_ratio(model.log_target(y) + backward - model.log_target(x) - forward))
}

pub fn malta_acceptance(model: &PotentialModel, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    Ok(malta_log_acceptance(model, x, y, h)?.exp())
}

pub fn malta_step(model: &PotentialModel, input: OverdampedStepInput<'_>) -> Result<StepOutcome<OverdampedState>> {
    input.validate(model)?;
    let zeta = input.require_zeta()?;
    let x = &input.state.x;
    let drift = malta_drift_term(model, x, input.h);
    let proposal = OverdampedState::new(propose(x, &drift, input.dw, noise_scale(model)));
    let log_alpha = if proposal.is_finite() {
        malta_log_acceptance(model, x, &proposal.x, input.h)?
    } else {
        f64::NEG_INFINITY
    };
    Ok(finish(input.state, proposal, zeta, log_alpha))
}

/// Membership in `B_h = {x : |1 - h x²| > 1}`, where the Euler drift map of
/// the quartic model expands.
pub fn in_instability_region(x: f64, h: f64) -> bool {
    (1.0 - h * x * x).abs() > 1.0
}

/// One step of `method`. ULA steps report `acceptance = 1`; a non-finite ULA
/// update is returned as an `Err(NonFinite)` for the caller to classify.
pub fn overdamped_step(
    model: &PotentialModel,
    method: OverdampedMethod,
    input: OverdampedStepInput<'_>,
) -> Result<StepOutcome<OverdampedState>> {
    match method {
        OverdampedMethod::Ula => {
            let next = ula_step(model, input)?;
            Ok(StepOutcome {
                state: next.clone(),
                proposal: next,
                acceptance: 1.0,
                accepted: true,
            })
        }
        OverdampedMethod::Mala => mala_step(model, input),
        OverdampedMethod::Malta => malta_step(model, input),
    }
}

/// Runs a chain and hands every outcome to `visit` instead of storing it.
///
/// Brownian increments come from `spec` with role `Brownian`, uniforms from
/// role `MetropolisUniform { lane: 0 }`. Returns the blow-up marker if the
/// chain left the guard box; the offending outcome is visited first.
pub fn drive_overdamped_chain<F>(
    model: &PotentialModel,
    method: OverdampedMethod,
    x0: &[f64],
    h: f64,
    n_steps: usize,
    spec: RngStreamSpec,
    options: ChainOptions,
    mut visit: F,
) -> Result<Option<BlowUp>>
where
    F: FnMut(usize, &StepOutcome<OverdampedState>),
{
    ensure_positive("h", h)?;
    ensure_len(model.dimension(), x0)?;
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be at least 1"));
    }
    let n = model.dimension();
    let mut brownian = spec.with_role(StreamRole::Brownian).open();
    let mut coins = spec.with_role(StreamRole::MetropolisUniform { lane: 0 }).open();
    let sqrt_h = h.sqrt();
    let mut dw = vec![0.0; n];
    let mut state = OverdampedState::new(x0.to_vec());

    for k in 0..n_steps {
        for w in dw.iter_mut() {
            let z = brownian.normal();
            *w = if options.zero_noise { 0.0 } else { sqrt_h * z };
        }
        let zeta = method.is_metropolized().then(|| coins.uniform());
        let input = OverdampedStepInput {
            state: &state,
            h,
            dw: &dw,
            zeta,
        };
        let outcome = match overdamped_step(model, method, input) {
            Ok(o) => o,
            Err(Error::NonFinite(_)) => {
                return Ok(Some(BlowUp {
                    step: k,
                    magnitude: f64::INFINITY,
                }))
            }
            Err(e) => return Err(e),
        };
        visit(k, &outcome);
        if let Some(magnitude) = options.exceeds_guard(&outcome.state.x) {
            return Ok(Some(BlowUp { step: k, magnitude }));
        }
        state = outcome.state;
    }
    Ok(None)
}

/// Runs a chain and records every step.
pub fn run_overdamped_chain(
    model: &PotentialModel,
    method: OverdampedMethod,
    x0: &[f64],
    h: f64,
    n_steps: usize,
    spec: RngStreamSpec,
    options: ChainOptions,
) -> Result<ChainTrace<OverdampedState>> {
    let mut steps = Vec::with_capacity(n_steps);
    let blow_up = drive_overdamped_chain(model, method, x0, h, n_steps, spec, options, |_, o| {
        steps.push(o.clone())
    })?;
    Ok(ChainTrace { steps, blow_up })
}
