//! Pathwise-coupled strong-error studies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{ensure_positive, Error, Result};
use crate::inertial::{inertial_step, InertialMethod, OuNoise};
use crate::model::{BlowUp, ChainOptions, InertialModel, OverdampedState, PhaseState, PotentialModel};
use crate::overdamped::{overdamped_step, OverdampedMethod, OverdampedStepInput};
use crate::rng::{RandomStream, RngStreamSpec, StreamRole};

use super::brownian::{generate_brownian_grid, BrownianIncrementGrid};
use super::equilibrium::EquilibriumSampler;
use super::fit::{fit_order, OrderFit};
use super::{exact_steps, with_threads};

/// Largest tolerated fraction of discarded realizations.
pub const DISCARD_BUDGET: f64 = 1e-4;
const MAX_INITIAL_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ula,
    Mala,
    Malta,
    Gla,
    Magla,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ula, Method::Mala, Method::Malta, Method::Gla, Method::Magla];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Ula => "ula",
            Method::Mala => "mala",
            Method::Malta => "malta",
            Method::Gla => "gla",
            Method::Magla => "magla",
        }
    }

    pub fn is_inertial(self) -> bool {
        matches!(self, Method::Gla | Method::Magla)
    }

    pub fn is_metropolized(self) -> bool {
        matches!(self, Method::Mala | Method::Malta | Method::Magla)
    }

    pub fn overdamped(self) -> Option<OverdampedMethod> {
        match self {
            Method::Ula => Some(OverdampedMethod::Ula),
            Method::Mala => Some(OverdampedMethod::Mala),
            Method::Malta => Some(OverdampedMethod::Malta),
            _ => None,
        }
    }

    pub fn inertial(self) -> Option<InertialMethod> {
        match self {
            Method::Gla => Some(InertialMethod::Gla),
            Method::Magla => Some(InertialMethod::Magla),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid("method", format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyModel {
    Overdamped(PotentialModel),
    Inertial(InertialModel),
}

impl StudyModel {
    pub fn potential(&self) -> &PotentialModel {
        match self {
            StudyModel::Overdamped(m) => m,
            StudyModel::Inertial(m) => m.base(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.potential().dimension()
    }

    pub fn is_inertial(&self) -> bool {
        matches!(self, StudyModel::Inertial(_))
    }

    /// `U` for overdamped states, `H` for phase states.
    pub fn energy(&self, state: &StudyState) -> Result<f64> {
        match (self, state) {
            (StudyModel::Overdamped(m), StudyState::Overdamped(s)) => Ok(m.energy(&s.x)),
            (StudyModel::Inertial(m), StudyState::Phase(s)) => Ok(m.hamiltonian(&s.q, &s.p)),
            _ => Err(Error::invalid("initial state", "state kind does not match the model")),
        }
    }

    fn check_state(&self, state: &StudyState) -> Result<()> {
        let n = self.dimension();
        let ok = match (self, state) {
            (StudyModel::Overdamped(_), StudyState::Overdamped(s)) => s.x.len() == n,
            (StudyModel::Inertial(_), StudyState::Phase(s)) => s.q.len() == n && s.p.len() == n,
            _ => return Err(Error::invalid("initial state", "state kind does not match the model")),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("initial state", format!("expected dimension {n}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyState {
    Overdamped(OverdampedState),
    Phase(PhaseState),
}

impl StudyState {
    /// Position coordinates.
    pub fn position(&self) -> &[f64] {
        match self {
            StudyState::Overdamped(s) => &s.x,
            StudyState::Phase(s) => &s.q,
        }
    }

    /// Squared Euclidean distance in state space (`Rⁿ` or `R²ⁿ`).
    pub fn distance_sq(&self, other: &StudyState) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        match (self, other) {
            (StudyState::Overdamped(a), StudyState::Overdamped(b)) => d(&a.x, &b.x),
            (StudyState::Phase(a), StudyState::Phase(b)) => d(&a.q, &b.q) + d(&a.p, &b.p),
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPolicy {
    Fixed(StudyState),
    /// Positions by inverse transform from `exp(-β u)` per coordinate, momenta
    /// from `N(0, m/β)`.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudyConfig {
    pub model: StudyModel,
    pub method: Method,
    pub horizon: f64,
    /// Strictly decreasing.
    pub step_sizes: Vec<f64>,
    /// Coarsest step divided by the fine step; a power of two, at least 64.
    pub fine_ratio: usize,
    pub realizations: usize,
    pub initial: InitialPolicy,
    /// Equilibrium draws above this energy are redrawn; a fixed start above it
    /// is a configuration error.
    pub energy_bound: Option<f64>,
    pub seed: u64,
    /// Worker cap; `None` uses the global pool. Results do not depend on it.
    pub threads: Option<usize>,
}

impl ConvergenceStudyConfig {
    pub fn h_fine(&self) -> f64 {
        self.step_sizes.first().copied().unwrap_or(f64::NAN) / self.fine_ratio as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_inertial() != self.model.is_inertial() {
            return Err(Error::invalid(
                "method",
                format!("{} does not apply to this model", self.method),
            ));
        }
        ensure_positive("horizon", self.horizon)?;
        if self.step_sizes.is_empty() {
            return Err(Error::invalid("step_sizes", "empty list"));
        }
        for h in &self.step_sizes {
            ensure_positive("step size", *h)?;
        }
        if self.step_sizes.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("step_sizes", "must be strictly decreasing"));
        }
        if self.fine_ratio < 64 || !self.fine_ratio.is_power_of_two() {
            return Err(Error::invalid("fine_ratio", format!("{} is not a power of two ≥ 64", self.fine_ratio)));
        }
        let h_fine = self.h_fine();
        for &h in &self.step_sizes {
            if exact_steps(self.horizon, h).is_none_or(|n| n == 0) {
                return Err(Error::Grid(format!("step {h} does not divide horizon {}", self.horizon)));
            }
            match exact_steps(h, h_fine) {
                Some(f) if f >= 1 && (!self.model.is_inertial() || f % 2 == 0) => {}
                _ => {
                    return Err(Error::Grid(format!(
                        "step {h} is not an {}multiple of h_fine {h_fine}",
                        if self.model.is_inertial() { "even " } else { "" }
                    )))
                }
            }
        }
        if self.realizations < 2 {
            return Err(Error::invalid("realizations", "need at least 2"));
        }
        if let Some(e0) = self.energy_bound {
            if e0.is_nan() {
                return Err(Error::invalid("energy_bound", "NaN"));
            }
        }
        if let InitialPolicy::Fixed(s) = &self.initial {
            self.model.check_state(s)?;
            if !crate::linalg::all_finite(s.position()) {
                return Err(Error::NonFinite("initial state"));
            }
            if let Some(e0) = self.energy_bound {
                let e = self.model.energy(s)?;
                if e > e0 {
                    return Err(Error::invalid("energy_bound", format!("initial energy {e} exceeds {e0}")));
                }
            }
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscardReason {
    /// The fine reference left the guard box.
    Reference(BlowUp),
    /// The method under test left the guard box at this step size.
    Method { step_size: f64, blow_up: BlowUp },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discard {
    pub realization: usize,
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub step_sizes: Vec<f64>,
    pub rms: Vec<f64>,
    /// Delta-method standard error of each RMS value.
    pub stderr: Vec<f64>,
    /// `None` when fewer than three step sizes were run or an RMS value is zero.
    pub fit: Option<OrderFit>,
    pub realizations: usize,
    pub discarded: Vec<Discard>,
}

impl ConvergenceReport {
    pub fn used_realizations(&self) -> usize {
        self.realizations - self.discarded.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceOutcome {
    Terminal(StudyState),
    BlowUp(BlowUp),
}

/// Fine-step unadjusted solution along the whole grid: Euler–Maruyama with
/// step `h_fine` for overdamped models, GLA with step `2 h_fine` for inertial
/// models (so each OU half step spans one fine row).
pub fn reference_trajectory(model: &StudyModel, grid: &BrownianIncrementGrid, start: &StudyState) -> Result<ReferenceOutcome> {
    model.check_state(start)?;
    if grid.dimension() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            found: grid.dimension(),
        });
    }
    let guard = ChainOptions::default().guard;
    match (model, start) {
        (StudyModel::Overdamped(m), StudyState::Overdamped(s)) => Ok(euler_maruyama(m, grid, &s.x, guard)),
        (StudyModel::Inertial(m), StudyState::Phase(s)) => {
            if grid.steps() % 2 != 0 {
                return Err(Error::Grid("inertial reference needs an even number of fine rows".into()));
            }
            Ok(fine_gla(m, grid, s, guard))
        }
        _ => unreachable!("checked by check_state"),
    }
}

fn euler_maruyama(model: &PotentialModel, grid: &BrownianIncrementGrid, x0: &[f64], guard: f64) -> ReferenceOutcome {
    let h = grid.h_fine();
    let noise = (2.0 / model.beta()).sqrt();
    let mut x = x0.to_vec();
    for i in 0..grid.steps() {
        let mut worst = 0.0_f64;
        for (xj, dw) in x.iter_mut().zip(grid.row(i)) {
            *xj += -h * model.profile_gradient(*xj) + noise * dw;
            worst = worst.max(xj.abs());
            if xj.is_nan() {
                worst = f64::NAN;
            }
        }
        if !(worst <= guard) {
            return ReferenceOutcome::BlowUp(BlowUp { step: i, magnitude: worst });
        }
    }
    ReferenceOutcome::Terminal(StudyState::Overdamped(OverdampedState::new(x)))
}

fn fine_gla(model: &InertialModel, grid: &BrownianIncrementGrid, s0: &PhaseState, guard: f64) -> ReferenceOutcome {
    let hf = grid.h_fine();
    let h = 2.0 * hf;
    let base = model.base();
    let scale = (2.0 * model.gamma() / model.beta()).sqrt();
    // One fine row per OU half step: decay and left-point weight coincide.
    let decay: Vec<f64> = model.mass().iter().map(|m| (-model.gamma() * hf / m).exp()).collect();
    let inv_mass: Vec<f64> = model.mass().iter().map(|m| 1.0 / m).collect();
    let (mut q, mut p) = (s0.q.clone(), s0.p.clone());
    let mut force: Vec<f64> = q.iter().map(|&x| base.profile_gradient(x)).collect();
    for k in 0..grid.steps() / 2 {
        let (w1, w2) = (grid.row(2 * k), grid.row(2 * k + 1));
        let mut worst = 0.0_f64;
        for j in 0..q.len() {
            let mut pj = decay[j] * p[j] + scale * decay[j] * w1[j];
            pj -= 0.5 * h * force[j];
            q[j] += h * inv_mass[j] * pj;
            force[j] = base.profile_gradient(q[j]);
            pj -= 0.5 * h * force[j];
            p[j] = decay[j] * pj + scale * decay[j] * w2[j];
            worst = worst.max(q[j].abs()).max(p[j].abs());
            if q[j].is_nan() || p[j].is_nan() {
                worst = f64::NAN;
            }
        }
        if !(worst <= guard) {
            return ReferenceOutcome::BlowUp(BlowUp { step: k, magnitude: worst });
        }
    }
    ReferenceOutcome::Terminal(StudyState::Phase(PhaseState::new(q, p)))
}

/// Draws or copies the starting state of realization `r`.
pub(crate) fn initial_state(
    model: &StudyModel,
    policy: &InitialPolicy,
    energy_bound: Option<f64>,
    sampler: Option<&EquilibriumSampler>,
    stream: &mut RandomStream,
) -> Result<StudyState> {
    let sampler = match policy {
        InitialPolicy::Fixed(s) => return Ok(s.clone()),
        InitialPolicy::Equilibrium => sampler.ok_or_else(|| Error::invalid("initial", "no equilibrium sampler"))?,
    };
    let n = model.dimension();
    for _ in 0..MAX_INITIAL_ATTEMPTS {
        let q: Vec<f64> = (0..n).map(|_| sampler.sample(stream)).collect();
        let state = match model {
            StudyModel::Overdamped(_) => StudyState::Overdamped(OverdampedState::new(q)),
            StudyModel::Inertial(m) => {
                let p = m.mass().iter().map(|mi| (mi / m.beta()).sqrt() * stream.normal()).collect();
                StudyState::Phase(PhaseState::new(q, p))
            }
        };
        match energy_bound {
            Some(e0) if model.energy(&state)? > e0 => continue,
            _ => return Ok(state),
        }
    }
    Err(Error::invalid(
        "energy_bound",
        format!("no equilibrium draw below the bound in {MAX_INITIAL_ATTEMPTS} attempts"),
    ))
}

/// Equilibrium sampler for the policy, if it needs one.
pub(crate) fn sampler_for(model: &StudyModel, policy: &InitialPolicy) -> Result<Option<EquilibriumSampler>> {
    match policy {
        InitialPolicy::Equilibrium => Ok(Some(EquilibriumSampler::new(model.potential())?)),
        InitialPolicy::Fixed(_) => Ok(None),
    }
}

/// Terminal state of the method at step `h` on coarsened increments of `grid`,
/// or the blow-up that ended it.
fn coupled_run(
    model: &StudyModel,
    method: Method,
    grid: &BrownianIncrementGrid,
    start: &StudyState,
    h: f64,
    coins: &mut RandomStream,
) -> Result<std::result::Result<StudyState, BlowUp>> {
    let options = ChainOptions::default();
    let factor = grid.factor_for(h)?;
    let n_steps = grid.steps() / factor;
    let n = model.dimension();
    match (model, start) {
        (StudyModel::Overdamped(m), StudyState::Overdamped(s)) => {
            let om = method.overdamped().ok_or_else(|| Error::invalid("method", "not an overdamped method"))?;
            let mut state = s.clone();
            let mut dw = vec![0.0; n];
            for k in 0..n_steps {
                grid.sum_rows_into(k * factor, (k + 1) * factor, &mut dw);
                let zeta = om.is_metropolized().then(|| coins.uniform());
                let input = OverdampedStepInput {
                    state: &state,
                    h,
                    dw: &dw,
                    zeta,
                };
                let outcome = match overdamped_step(m, om, input) {
                    Ok(o) => o,
                    Err(Error::NonFinite(_)) => {
                        return Ok(Err(BlowUp {
                            step: k,
                            magnitude: f64::INFINITY,
                        }))
                    }
                    Err(e) => return Err(e),
                };
                if let Some(magnitude) = options.exceeds_guard(&outcome.state.x) {
                    return Ok(Err(BlowUp { step: k, magnitude }));
                }
                state = outcome.state;
            }
            Ok(Ok(StudyState::Overdamped(state)))
        }
        (StudyModel::Inertial(m), StudyState::Phase(s)) => {
            let im = method.inertial().ok_or_else(|| Error::invalid("method", "not an inertial method"))?;
            let half = factor / 2;
            let mut state = s.clone();
            let mut xi1 = OuNoise::zeros(n);
            let mut xi2 = OuNoise::zeros(n);
            for k in 0..n_steps {
                let a = k * factor;
                grid.ou_sum_into(m, a, a + half, &mut xi1.xi);
                grid.ou_sum_into(m, a + half, a + factor, &mut xi2.xi);
                let zeta = matches!(im, InertialMethod::Magla).then(|| coins.uniform());
                let outcome = inertial_step(m, im, &state, h, &xi1, &xi2, zeta)?;
                let worst = options
                    .exceeds_guard(&outcome.state.q)
                    .or_else(|| options.exceeds_guard(&outcome.state.p));
                if let Some(magnitude) = worst {
                    return Ok(Err(BlowUp { step: k, magnitude }));
                }
                state = outcome.state;
            }
            Ok(Ok(StudyState::Phase(state)))
        }
        _ => Err(Error::invalid("initial state", "state kind does not match the model")),
    }
}

enum RealizationResult {
    SquaredErrors(Vec<f64>),
    Discarded(DiscardReason),
}

fn run_realization(config: &ConvergenceStudyConfig, sampler: Option<&EquilibriumSampler>, r: usize) -> Result<RealizationResult> {
    let spec = RngStreamSpec::new(config.seed, r as u64, StreamRole::Brownian);
    let start = initial_state(
        &config.model,
        &config.initial,
        config.energy_bound,
        sampler,
        &mut spec.with_role(StreamRole::InitialCondition).open(),
    )?;
    let grid = generate_brownian_grid(config.horizon, config.h_fine(), config.model.dimension(), spec)?;
    let reference = match reference_trajectory(&config.model, &grid, &start)? {
        ReferenceOutcome::Terminal(s) => s,
        ReferenceOutcome::BlowUp(b) => return Ok(RealizationResult::Discarded(DiscardReason::Reference(b))),
    };
    let mut errors = Vec::with_capacity(config.step_sizes.len());
    for (lane, &h) in config.step_sizes.iter().enumerate() {
        let mut coins = spec.with_role(StreamRole::MetropolisUniform { lane: lane as u32 }).open();
        match coupled_run(&config.model, config.method, &grid, &start, h, &mut coins)? {
            Ok(terminal) => errors.push(terminal.distance_sq(&reference)),
            Err(blow_up) => {
                return Ok(RealizationResult::Discarded(DiscardReason::Method { step_size: h, blow_up }));
            }
        }
    }
    Ok(RealizationResult::SquaredErrors(errors))
}

/// Runs the study. Realizations execute in parallel; the reduction walks them
/// in index order, so the report is independent of the worker count.
pub fn strong_error_study(config: &ConvergenceStudyConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let sampler = sampler_for(&config.model, &config.initial)?;
    let results: Vec<Result<RealizationResult>> = with_threads(config.threads, || {
        (0..config.realizations)
            .into_par_iter()
            .map(|r| run_realization(config, sampler.as_ref(), r))
            .collect()
    })?;

    let k = config.step_sizes.len();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut discarded = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res? {
            RealizationResult::SquaredErrors(e) => {
                for j in 0..k {
                    sum[j] += e[j];
                    sum_sq[j] += e[j] * e[j];
                }
            }
            RealizationResult::Discarded(reason) => discarded.push(Discard { realization: r, reason }),
        }
    }
    let total = config.realizations;
    if discarded.len() as f64 >= DISCARD_BUDGET * total as f64 {
        return Err(Error::StudyAborted {
            reason: "discarded fraction reached 1e-4".into(),
            discarded: discarded.len(),
            total,
        });
    }
    let used = (total - discarded.len()) as f64;
    let mut rms = Vec::with_capacity(k);
    let mut stderr = Vec::with_capacity(k);
    for j in 0..k {
        let mean = sum[j] / used;
        let var = ((sum_sq[j] / used - mean * mean) * used / (used - 1.0)).max(0.0);
        let root = mean.sqrt();
        rms.push(root);
        stderr.push(if root > 0.0 { (var / used).sqrt() / (2.0 * root) } else { 0.0 });
    }
    if rms.iter().chain(&stderr).any(|v| !v.is_finite()) {
        return Err(Error::StudyAborted {
            reason: "non-finite error accumulator".into(),
            discarded: discarded.len(),
            total,
        });
    }
    let fit = if k >= 3 && rms.iter().all(|&v| v > 0.0) {
        Some(fit_order(&config.step_sizes, &rms)?)
    } else {
        None
    };
    Ok(ConvergenceReport {
        step_sizes: config.step_sizes.clone(),
        rms,
        stderr,
        fit,
        realizations: total,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::brownian::coarse_ou_integral;
    use crate::inertial::gla_step;
    use crate::model::{make_quartic_model, PotentialKind};
    use approx::assert_abs_diff_eq;

    fn zero_model() -> PotentialModel {
        PotentialModel::new(PotentialKind::Zero, 1, 1.0).unwrap()
    }

    fn base_config(model: StudyModel, method: Method) -> ConvergenceStudyConfig {
        let inertial = model.is_inertial();
        ConvergenceStudyConfig {
            model,
            method,
            horizon: 1.0,
            step_sizes: vec![0.25, 0.125, 0.0625],
            fine_ratio: 64,
            realizations: 200,
            initial: if inertial {
                InitialPolicy::Fixed(StudyState::Phase(PhaseState::new(vec![0.1], vec![0.0])))
            } else {
                InitialPolicy::Fixed(StudyState::Overdamped(OverdampedState::new(vec![0.1])))
            },
            energy_bound: None,
            seed: 17,
            threads: None,
        }
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("hmc".parse::<Method>().is_err());
    }

    #[test]
    fn validation() {
        let good = base_config(StudyModel::Overdamped(make_quartic_model(1.0).unwrap()), Method::Mala);
        good.validate().unwrap();
        let mut c = good.clone();
        c.method = Method::Magla;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.step_sizes = vec![0.125, 0.25, 0.0625];
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.fine_ratio = 96;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.step_sizes = vec![0.3, 0.1];
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.energy_bound = Some(1e-6);
        assert!(c.validate().is_err());
        let mut c = good;
        c.threads = Some(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_potential_reference_is_exact_diffusion() {
        let model = StudyModel::Overdamped(zero_model().with_beta(0.5).unwrap());
        let spec = RngStreamSpec::new(1, 0, StreamRole::Brownian);
        let grid = generate_brownian_grid(1.0, 1.0 / 256.0, 1, spec).unwrap();
        let start = StudyState::Overdamped(OverdampedState::new(vec![0.3]));
        let ReferenceOutcome::Terminal(end) = reference_trajectory(&model, &grid, &start).unwrap() else {
            panic!("blow-up")
        };
        assert_abs_diff_eq!(end.position()[0], 0.3 + 2.0 * grid.terminal_value()[0], epsilon = 1e-12);
    }

    #[test]
    fn harmonic_inertial_reference_converges_to_damped_oscillator() {
        let m = InertialModel::with_unit_mass(PotentialModel::new(PotentialKind::Quadratic, 1, 1.0).unwrap(), 1.0).unwrap();
        let model = StudyModel::Inertial(m);
        let start = StudyState::Phase(PhaseState::new(vec![1.0], vec![0.0]));
        // q'' + q' + q = 0, q(0) = 1, q'(0) = 0.
        let w = 3f64.sqrt() / 2.0;
        let exact_q = (-0.5f64).exp() * (w.cos() + 0.5 / w * w.sin());
        let exact_p = -(-0.5f64).exp() * (1.0 / w) * w.sin();
        let mut errs = Vec::new();
        for hf in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
            let grid = BrownianIncrementGrid::zeros(1.0, hf, 1).unwrap();
            let ReferenceOutcome::Terminal(StudyState::Phase(s)) = reference_trajectory(&model, &grid, &start).unwrap() else {
                panic!()
            };
            errs.push(((s.q[0] - exact_q).powi(2) + (s.p[0] - exact_p).powi(2)).sqrt());
        }
        assert!(errs[2] < 1e-2, "{errs:?}");
        assert!(errs[0] / errs[1] > 1.8 && errs[1] / errs[2] > 1.8, "{errs:?}");
    }

    #[test]
    fn fine_gla_matches_composed_steps() {
        let m = InertialModel::new(make_quartic_model(1.0).unwrap(), 0.7, vec![1.3]).unwrap();
        let model = StudyModel::Inertial(m.clone());
        let spec = RngStreamSpec::new(3, 0, StreamRole::Brownian);
        let hf = 1.0 / 128.0;
        let grid = generate_brownian_grid(1.0, hf, 1, spec).unwrap();
        let s0 = PhaseState::new(vec![0.4], vec![-0.2]);
        let mut s = s0.clone();
        for k in 0..64 {
            let t = 2.0 * k as f64 * hf;
            let xi1 = coarse_ou_integral(&grid, &m, t, t + hf).unwrap();
            let xi2 = coarse_ou_integral(&grid, &m, t + hf, t + 2.0 * hf).unwrap();
            s = gla_step(&m, &s, 2.0 * hf, &xi1, &xi2);
        }
        let ReferenceOutcome::Terminal(StudyState::Phase(r)) =
            reference_trajectory(&model, &grid, &StudyState::Phase(s0)).unwrap()
        else {
            panic!()
        };
        assert_abs_diff_eq!(r.q[0], s.q[0], epsilon = 1e-12);
        assert_abs_diff_eq!(r.p[0], s.p[0], epsilon = 1e-12);
    }

    #[test]
    fn reference_blow_up_is_reported() {
        let model = StudyModel::Overdamped(make_quartic_model(1.0).unwrap());
        let grid = BrownianIncrementGrid::zeros(1.0, 0.25, 1).unwrap();
        let start = StudyState::Overdamped(OverdampedState::new(vec![4.0]));
        assert!(matches!(
            reference_trajectory(&model, &grid, &start).unwrap(),
            ReferenceOutcome::BlowUp(_)
        ));
    }

    #[test]
    fn zero_potential_mala_has_no_error() {
        let mut c = base_config(StudyModel::Overdamped(zero_model()), Method::Mala);
        c.initial = InitialPolicy::Fixed(StudyState::Overdamped(OverdampedState::new(vec![0.5])));
        let report = strong_error_study(&c).unwrap();
        assert!(report.rms.iter().all(|&e| e < 1e-12), "{:?}", report.rms);
        assert!(report.discarded.is_empty());
    }

    #[test]
    fn report_is_independent_of_worker_count() {
        let mut c = base_config(StudyModel::Overdamped(make_quartic_model(1.0).unwrap()), Method::Mala);
        c.initial = InitialPolicy::Equilibrium;
        c.realizations = 64;
        c.threads = Some(1);
        let a = strong_error_study(&c).unwrap();
        c.threads = Some(3);
        let b = strong_error_study(&c).unwrap();
        assert_eq!(a, b);
        assert!(a.fit.is_some());
        assert!(a.rms.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn magla_errors_shrink_with_step() {
        let m = InertialModel::with_unit_mass(make_quartic_model(1.0).unwrap(), 1.0).unwrap();
        let c = base_config(StudyModel::Inertial(m), Method::Magla);
        let r = strong_error_study(&c).unwrap();
        assert!(r.rms[0] > r.rms[2], "{:?}", r.rms);
    }

    #[test]
    fn blow_ups_abort_the_study() {
        let mut c = base_config(StudyModel::Overdamped(make_quartic_model(1.0).unwrap()), Method::Ula);
        c.initial = InitialPolicy::Fixed(StudyState::Overdamped(OverdampedState::new(vec![40.0])));
        c.step_sizes = vec![0.5, 0.25, 0.125];
        assert!(matches!(strong_error_study(&c), Err(Error::StudyAborted { .. })));
    }

    #[test]
    fn energy_bound_filters_equilibrium_draws() {
        let model = StudyModel::Overdamped(make_quartic_model(1.0).unwrap());
        let sampler = sampler_for(&model, &InitialPolicy::Equilibrium).unwrap();
        let mut s = RngStreamSpec::new(2, 0, StreamRole::InitialCondition).open();
        for _ in 0..200 {
            let st = initial_state(&model, &InitialPolicy::Equilibrium, Some(0.01), sampler.as_ref(), &mut s).unwrap();
            assert!(model.energy(&st).unwrap() <= 0.01);
        }
    }
}
