//! Inertial chains: GLA and MAGLA.
//!
//! One GLA step is the Strang composition `ψ_{h/2} ∘ θ_h ∘ ψ_{h/2}`, where `ψ`
//! is the exact Ornstein–Uhlenbeck flow on the momentum and `θ_h` is the
//! discrete Hamiltonian map of a variational integrator. MAGLA uses a GLA step
//! as its proposal, accepts it with a modified detailed-balance ratio, and
//! flips the momentum on rejection.
//!
//! The transition density and the acceptance probability are written against
//! the [`DiscreteLagrangian`] abstraction; only the explicit Störmer–Verlet
//! instance is shipped.

use std::f64::consts::PI;

use crate::error::{ensure_len, ensure_positive, Error, Result};
use crate::model::{BlowUp, ChainOptions, ChainTrace, InertialModel, PhaseState, StepOutcome};
use crate::overdamped::{cap_log_ratio, metropolis_accepts};
use crate::rng::{RandomStream, RngStreamSpec, StreamRole};

/// Generating function `L_d(q0, q1, h)` of a variational integrator, exposed
/// through the derivatives the transition density needs.
pub trait DiscreteLagrangian {
    /// `D₁L_d(q0, q1, h)`.
    fn d1(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<Vec<f64>>;
    /// `D₂L_d(q0, q1, h)`.
    fn d2(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<Vec<f64>>;
    /// `log |det D₁₂L_d(q0, q1, h)|`.
    fn log_abs_det_d12(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<f64>;
    /// Whether `L_d(q0, q1, h) = L_d(q1, q0, h)`.
    fn is_self_adjoint(&self) -> bool;
}

/// `L_d = (1/2h)(q1-q0)ᵀM(q1-q0) - (h/2)(U(q0) + U(q1))`.
#[derive(Debug, Clone, Copy)]
pub struct VerletLagrangian<'a> {
    model: &'a InertialModel,
}

pub fn verlet_lagrangian(model: &InertialModel) -> VerletLagrangian<'_> {
    VerletLagrangian { model }
}

impl VerletLagrangian<'_> {
    fn check(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<()> {
        ensure_positive("h", h)?;
        ensure_len(self.model.dimension(), q0)?;
        ensure_len(self.model.dimension(), q1)
    }

    /// The Lagrangian itself.
    pub fn value(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<f64> {
        self.check(q0, q1, h)?;
        let base = self.model.base();
        let kin: f64 = q0
            .iter()
            .zip(q1)
            .zip(self.model.mass())
            .map(|((a, b), m)| m * (b - a) * (b - a))
            .sum();
        Ok(kin / (2.0 * h) - 0.5 * h * (base.energy(q0) + base.energy(q1)))
    }
}

impl DiscreteLagrangian for VerletLagrangian<'_> {
    fn d1(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<Vec<f64>> {
        self.check(q0, q1, h)?;
        let g0 = self.model.base().gradient(q0);
        Ok(q0
            .iter()
            .zip(q1)
            .zip(self.model.mass())
            .zip(&g0)
            .map(|(((a, b), m), g)| -m * (b - a) / h - 0.5 * h * g)
            .collect())
    }

    fn d2(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<Vec<f64>> {
        self.check(q0, q1, h)?;
        let g1 = self.model.base().gradient(q1);
        Ok(q0
            .iter()
            .zip(q1)
            .zip(self.model.mass())
            .zip(&g1)
            .map(|(((a, b), m), g)| m * (b - a) / h - 0.5 * h * g)
            .collect())
    }

    fn log_abs_det_d12(&self, q0: &[f64], q1: &[f64], h: f64) -> Result<f64> {
        self.check(q0, q1, h)?;
        Ok(self.model.mass().iter().map(|m| (m / h).ln()).sum())
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// Störmer–Verlet (kick–drift–kick) map `θ_h`:
/// `q' = q + hM⁻¹p - (h²/2)M⁻¹∇U(q)`, `p' = p - (h/2)(∇U(q) + ∇U(q'))`.
pub fn verlet_map(model: &InertialModel, q: &[f64], p: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let base = model.base();
    let g0 = base.gradient(q);
    let q1: Vec<f64> = q
        .iter()
        .zip(p)
        .zip(model.mass())
        .zip(&g0)
        .map(|(((qi, pi), m), g)| qi + h * pi / m - 0.5 * h * h * g / m)
        .collect();
    let g1 = base.gradient(&q1);
    let p1 = p
        .iter()
        .zip(g0.iter().zip(&g1))
        .map(|(pi, (a, b))| pi - 0.5 * h * (a + b))
        .collect();
    (q1, p1)
}

/// Momentum noise of one Ornstein–Uhlenbeck half step, a Gaussian vector with
/// per-component variance `Σ_{h/2,i} = β⁻¹(1 - e^{-γh/mᵢ}) mᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub xi: Vec<f64>,
}

impl OuNoise {
    pub fn new(xi: Vec<f64>) -> Self {
        Self { xi }
    }

    pub fn zeros(n: usize) -> Self {
        Self { xi: vec![0.0; n] }
    }

    /// Exact-in-law draw for an OU flow of length `duration`.
    pub fn draw(model: &InertialModel, duration: f64, stream: &mut RandomStream) -> Self {
        let xi = ou_variance(model, duration)
            .into_iter()
            .map(|v| v.sqrt() * stream.normal())
            .collect();
        Self { xi }
    }
}

/// `Σ_t = β⁻¹(I - e^{-2γM⁻¹t}) M`, diagonal.
pub fn ou_variance(model: &InertialModel, duration: f64) -> Vec<f64> {
    let (beta, gamma) = (model.beta(), model.gamma());
    model
        .mass()
        .iter()
        .map(|m| -(-2.0 * gamma * duration / m).exp_m1() * m / beta)
        .collect()
}

/// `e^{-γM⁻¹t}`, diagonal.
pub fn ou_decay(model: &InertialModel, duration: f64) -> Vec<f64> {
    model
        .mass()
        .iter()
        .map(|m| (-model.gamma() * duration / m).exp())
        .collect()
}

/// Exact OU flow over half of the step `h`: `p' = e^{-γh/(2m)} ⊙ p + ξ`.
pub fn ou_half_step(model: &InertialModel, p: &[f64], h: f64, xi: &OuNoise) -> Vec<f64> {
    ou_decay(model, 0.5 * h)
        .iter()
        .zip(p)
        .zip(&xi.xi)
        .map(|((b, pi), x)| b * pi + x)
        .collect()
}

/// Log transition density of the OU flow of length `duration`, with the
/// standard Gaussian normalization `(2π)^{-n/2} (det Σ)^{-1/2}`.
pub fn ou_log_density(model: &InertialModel, p0: &[f64], p1: &[f64], duration: f64) -> Result<f64> {
    ensure_positive("duration", duration)?;
    ensure_len(model.dimension(), p0)?;
    ensure_len(model.dimension(), p1)?;
    let var = ou_variance(model, duration);
    let decay = ou_decay(model, duration);
    let mut acc = -0.5 * p0.len() as f64 * (2.0 * PI).ln();
    for i in 0..p0.len() {
        let r = p1[i] - decay[i] * p0[i];
        acc -= 0.5 * (var[i].ln() + r * r / var[i]);
    }
    Ok(acc)
}

/// One GLA step `ψ_{h/2} ∘ θ_h ∘ ψ_{h/2}` with the two half-step noises given.
pub fn gla_step(model: &InertialModel, state: &PhaseState, h: f64, xi1: &OuNoise, xi2: &OuNoise) -> PhaseState {
    let p_half = ou_half_step(model, &state.p, h, xi1);
    let (q1, p_kick) = verlet_map(model, &state.q, &p_half, h);
    let p1 = ou_half_step(model, &p_kick, h, xi2);
    PhaseState::new(q1, p1)
}

/// `log q_h((q0,p0), (q1,p1))` of GLA for an arbitrary discrete Lagrangian:
/// `log|det D₁₂L_d| + log o_{h/2}(p0, -D₁L_d) + log o_{h/2}(D₂L_d, p1)`.
pub fn gla_log_density<L: DiscreteLagrangian + ?Sized>(
    model: &InertialModel,
    ld: &L,
    from: &PhaseState,
    to: &PhaseState,
    h: f64,
) -> Result<f64> {
    ensure_positive("h", h)?;
    let d1 = ld.d1(&from.q, &to.q, h)?;
    let d2 = ld.d2(&from.q, &to.q, h)?;
    let minus_d1: Vec<f64> = d1.iter().map(|v| -v).collect();
    Ok(ld.log_abs_det_d12(&from.q, &to.q, h)?
        + ou_log_density(model, &from.p, &minus_d1, 0.5 * h)?
        + ou_log_density(model, &d2, &to.p, 0.5 * h)?)
}

/// Discrete energy change
/// `ΔE = ½D₂L_dᵀM⁻¹D₂L_d + U(q1) - ½D₁L_dᵀM⁻¹D₁L_d - U(q0)`.
pub fn delta_e<L: DiscreteLagrangian + ?Sized>(
    model: &InertialModel,
    ld: &L,
    q0: &[f64],
    q1: &[f64],
    h: f64,
) -> Result<f64> {
    let d1 = ld.d1(q0, q1, h)?;
    let d2 = ld.d2(q0, q1, h)?;
    let base = model.base();
    Ok(model.kinetic(&d2) + base.energy(q1) - model.kinetic(&d1) - base.energy(q0))
}

/// `ΔE` for the Verlet Lagrangian, in closed form:
/// `U(q1) - U(q0) - ½⟨∇U(q1) + ∇U(q0), q1 - q0⟩ + (h²/8)(|∇U(q1)|²_{M⁻¹} - |∇U(q0)|²_{M⁻¹})`.
pub fn verlet_delta_e(model: &InertialModel, q0: &[f64], q1: &[f64], h: f64) -> f64 {
    let base = model.base();
    let g0 = base.gradient(q0);
    let g1 = base.gradient(q1);
    let mut cross = 0.0;
    let mut quad = 0.0;
    for i in 0..q0.len() {
        cross += (g1[i] + g0[i]) * (q1[i] - q0[i]);
        quad += (g1[i] * g1[i] - g0[i] * g0[i]) / model.mass()[i];
    }
    base.energy(q1) - base.energy(q0) - 0.5 * cross + 0.125 * h * h * quad
}

/// `log α = min(0, -βΔE(q0, q1))`. Only valid for self-adjoint `L_d`.
pub fn magla_log_acceptance<L: DiscreteLagrangian + ?Sized>(
    model: &InertialModel,
    ld: &L,
    from: &PhaseState,
    to: &PhaseState,
    h: f64,
) -> Result<f64> {
    if !ld.is_self_adjoint() {
        return Err(Error::NotSelfAdjoint);
    }
    Ok(cap_log_ratio(-model.beta() * delta_e(model, ld, &from.q, &to.q, h)?))
}

/// MAGLA acceptance probability `1 ∧ exp(-βΔE(q0, q1))`.
pub fn magla_acceptance<L: DiscreteLagrangian + ?Sized>(
    model: &InertialModel,
    ld: &L,
    from: &PhaseState,
    to: &PhaseState,
    h: f64,
) -> Result<f64> {
    Ok(magla_log_acceptance(model, ld, from, to, h)?.exp())
}

/// The modified detailed-balance ratio written out with transition densities
/// toward momentum-flipped targets:
///
/// `q_h((q1,p1), (q0,-p0)) π(q1,p1) / (q_h((q0,p0), (q1,-p1)) π(q0,p0))`.
pub fn magla_log_acceptance_via_densities<L: DiscreteLagrangian + ?Sized>(
    model: &InertialModel,
    ld: &L,
    from: &PhaseState,
    to: &PhaseState,
    h: f64,
) -> Result<f64> {
    let beta = model.beta();
    let num = gla_log_density(model, ld, to, &from.flipped(), h)?;
    let den = gla_log_density(model, ld, from, &to.flipped(), h)?;
    let log_ratio = num - beta * model.hamiltonian(&to.q, &to.p) - den + beta * model.hamiltonian(&from.q, &from.p);
    Ok(cap_log_ratio(log_ratio))
}

/// One MAGLA step. On rejection the state becomes `(q, -p)`.
pub fn magla_step(
    model: &InertialModel,
    state: &PhaseState,
    h: f64,
    xi1: &OuNoise,
    xi2: &OuNoise,
    zeta: f64,
) -> Result<StepOutcome<PhaseState>> {
    ensure_positive("h", h)?;
    check_phase(model, state)?;
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::invalid("zeta", format!("must lie in [0, 1), got {zeta}")));
    }
    let proposal = gla_step(model, state, h, xi1, xi2);
    let log_alpha = if proposal.is_finite() {
        magla_log_acceptance(model, &verlet_lagrangian(model), state, &proposal, h)?
    } else {
        f64::NEG_INFINITY
    };
    let accepted = metropolis_accepts(zeta, log_alpha);
    Ok(StepOutcome {
        state: if accepted { proposal.clone() } else { state.flipped() },
        proposal,
        acceptance: log_alpha.exp(),
        accepted,
    })
}

fn check_phase(model: &InertialModel, state: &PhaseState) -> Result<()> {
    ensure_len(model.dimension(), &state.q)?;
    ensure_len(model.dimension(), &state.p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InertialMethod {
    Gla,
    Magla,
}

impl InertialMethod {
    pub fn tag(self) -> &'static str {
        match self {
            InertialMethod::Gla => "gla",
            InertialMethod::Magla => "magla",
        }
    }
}

/// One step of `method`; GLA reports `acceptance = 1`.
pub fn inertial_step(
    model: &InertialModel,
    method: InertialMethod,
    state: &PhaseState,
    h: f64,
    xi1: &OuNoise,
    xi2: &OuNoise,
    zeta: Option<f64>,
) -> Result<StepOutcome<PhaseState>> {
    match method {
        InertialMethod::Gla => {
            ensure_positive("h", h)?;
            check_phase(model, state)?;
            let next = gla_step(model, state, h, xi1, xi2);
            Ok(StepOutcome {
                state: next.clone(),
                proposal: next,
                acceptance: 1.0,
                accepted: true,
            })
        }
        InertialMethod::Magla => {
            let zeta = zeta.ok_or_else(|| Error::invalid("zeta", "MAGLA step needs a uniform"))?;
            magla_step(model, state, h, xi1, xi2, zeta)
        }
    }
}

/// Streaming inertial chain driver; see
/// [`drive_overdamped_chain`](crate::overdamped::drive_overdamped_chain) for the
/// stream layout and blow-up convention. The guard applies to `q` and `p`.
pub fn drive_inertial_chain<F>(
    model: &InertialModel,
    method: InertialMethod,
    state0: &PhaseState,
    h: f64,
    n_steps: usize,
    spec: RngStreamSpec,
    options: ChainOptions,
    mut visit: F,
) -> Result<Option<BlowUp>>
where
    F: FnMut(usize, &StepOutcome<PhaseState>),
{
    ensure_positive("h", h)?;
    check_phase(model, state0)?;
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be at least 1"));
    }
    let n = model.dimension();
    let mut brownian = spec.with_role(StreamRole::Brownian).open();
    let mut coins = spec.with_role(StreamRole::MetropolisUniform { lane: 0 }).open();
    let sd: Vec<f64> = ou_variance(model, 0.5 * h).into_iter().map(f64::sqrt).collect();
    let mut xi1 = OuNoise::zeros(n);
    let mut xi2 = OuNoise::zeros(n);
    let mut state = state0.clone();

    for k in 0..n_steps {
        for xi in [&mut xi1, &mut xi2] {
            for (v, s) in xi.xi.iter_mut().zip(&sd) {
                let z = brownian.normal();
                *v = if options.zero_noise { 0.0 } else { s * z };
            }
        }
        let zeta = matches!(method, InertialMethod::Magla).then(|| coins.uniform());
        let outcome = inertial_step(model, method, &state, h, &xi1, &xi2, zeta)?;
        visit(k, &outcome);
        let worst = options
            .exceeds_guard(&outcome.state.q)
            .or_else(|| options.exceeds_guard(&outcome.state.p));
        if let Some(magnitude) = worst {
            return Ok(Some(BlowUp { step: k, magnitude }));
        }
        state = outcome.state;
    }
    Ok(None)
}

pub fn run_inertial_chain(
    model: &InertialModel,
    method: InertialMethod,
    state0: &PhaseState,
    h: f64,
    n_steps: usize,
    spec: RngStreamSpec,
    options: ChainOptions,
) -> Result<ChainTrace<PhaseState>> {
    let mut steps = Vec::with_capacity(n_steps);
    let blow_up = drive_inertial_chain(model, method, state0, h, n_steps, spec, options, |_, o| {
        steps.push(o.clone())
    })?;
    Ok(ChainTrace { steps, blow_up })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_quartic_model, PotentialKind, PotentialModel};
    use approx::assert_abs_diff_eq;

    fn harmonic(gamma: f64) -> InertialModel {
        let base = PotentialModel::new(PotentialKind::Quadratic, 1, 1.0).unwrap();
        InertialModel::with_unit_mass(base, gamma).unwrap()
    }

    fn free(n: usize, gamma: f64, mass: Vec<f64>) -> InertialModel {
        let base = PotentialModel::new(PotentialKind::Zero, n, 1.0).unwrap();
        InertialModel::new(base, gamma, mass).unwrap()
    }

    #[test]
    fn verlet_lagrangian_examples() {
        let m = harmonic(1.0);
        let ld = verlet_lagrangian(&m);
        let d1 = ld.d1(&[1.0], &[0.995], 0.1).unwrap();
        let d2 = ld.d2(&[1.0], &[0.995], 0.1).unwrap();
        assert_abs_diff_eq!(-d1[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(d2[0], -0.09975, epsilon = 1e-13);

        let ld_free = free(1, 1.0, vec![1.0]);
        let l = verlet_lagrangian(&ld_free);
        assert_eq!(l.d1(&[0.7], &[0.7], 0.2).unwrap(), vec![0.0]);
        assert_eq!(l.d2(&[0.7], &[0.7], 0.2).unwrap(), vec![0.0]);
        assert!(l.is_self_adjoint());
        assert!(l.d1(&[0.7], &[0.7], 0.0).is_err());
        assert_abs_diff_eq!(ld.log_abs_det_d12(&[1.0], &[0.3], 0.1).unwrap(), 10f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn verlet_map_examples() {
        let m = harmonic(1.0);
        let (q, p) = verlet_map(&m, &[1.0], &[0.0], 0.1);
        assert_abs_diff_eq!(q[0], 0.995, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], -0.09975, epsilon = 1e-15);

        let f = free(2, 1.0, vec![2.0, 0.5]);
        let (q, p) = verlet_map(&f, &[1.0, -1.0], &[1.0, 1.0], 0.2);
        assert_eq!(q, vec![1.1, -0.6]);
        assert_eq!(p, vec![1.0, 1.0]);
    }

    #[test]
    fn verlet_is_reversible_under_flip() {
        let m = harmonic(1.0);
        let (q1, p1) = verlet_map(&m, &[0.8], &[-0.3], 0.1);
        let (q2, p2) = verlet_map(&m, &q1, &[-p1[0]], 0.1);
        assert_abs_diff_eq!(q2[0], 0.8, epsilon = 1e-10);
        assert_abs_diff_eq!(-p2[0], -0.3, epsilon = 1e-10);
    }

    #[test]
    fn ou_half_step_examples() {
        let m = harmonic(1.0);
        let p = ou_half_step(&m, &[2.0], 1e-300, &OuNoise::zeros(1));
        assert_eq!(p, vec![2.0]);
        let p = ou_half_step(&m, &[2.0], 0.2, &OuNoise::zeros(1));
        assert_abs_diff_eq!(p[0], 2.0 * (-0.1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 1.80967, epsilon = 1e-5);
    }

    #[test]
    fn ou_noise_variance() {
        let m = harmonic(1.0);
        let mut s = RngStreamSpec::new(9, 0, StreamRole::Brownian).open();
        let n = 100_000;
        // Half step of h = 0.1, i.e. OU duration 0.05.
        let var: f64 = (0..n)
            .map(|_| ou_half_step(&m, &[0.0], 0.1, &OuNoise::draw(&m, 0.05, &mut s))[0].powi(2))
            .sum::<f64>()
            / n as f64;
        let expected = 1.0 - (-0.1f64).exp();
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn ou_density_examples() {
        let m = harmonic(1.0);
        let d: f64 = 0.3;
        let mean = (-d).exp() * 0.7;
        let v = ou_log_density(&m, &[0.7], &[mean], d).unwrap();
        let sigma = 1.0 - (-2.0 * d).exp();
        assert_abs_diff_eq!(v, -0.5 * (2.0 * PI).ln() - 0.5 * sigma.ln(), epsilon = 1e-14);

        let v = ou_log_density(&m, &[0.0], &[1.0], 2f64.ln() / 2.0).unwrap();
        assert_abs_diff_eq!(v, -0.5 * PI.ln() - 1.0, epsilon = 1e-14);
        assert!(ou_log_density(&m, &[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn gla_free_flight() {
        let (gamma, h, m) = (0.7, 0.3, 2.0);
        let f = free(1, gamma, vec![m]);
        let s = gla_step(&f, &PhaseState::new(vec![1.0], vec![0.5]), h, &OuNoise::zeros(1), &OuNoise::zeros(1));
        let b = (-gamma * h / (2.0 * m)).exp();
        assert_abs_diff_eq!(s.q[0], 1.0 + h / m * b * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.p[0], (-gamma * h / m).exp() * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gla_vanishing_friction_is_verlet() {
        let base = make_quartic_model(1.0).unwrap();
        let m = InertialModel::with_unit_mass(base, 1e-20).unwrap();
        let mut s = RngStreamSpec::new(1, 0, StreamRole::Brownian).open();
        let xi1 = OuNoise::draw(&m, 0.05, &mut s);
        let xi2 = OuNoise::draw(&m, 0.05, &mut s);
        let g = gla_step(&m, &PhaseState::new(vec![0.9], vec![-0.4]), 0.1, &xi1, &xi2);
        let (q, p) = verlet_map(&m, &[0.9], &[-0.4], 0.1);
        assert_abs_diff_eq!(g.q[0], q[0], epsilon = 1e-9);
        assert_abs_diff_eq!(g.p[0], p[0], epsilon = 1e-9);
    }

    #[test]
    fn gla_density_det_term() {
        let m = harmonic(1.0);
        let ld = verlet_lagrangian(&m);
        let from = PhaseState::new(vec![1.0], vec![0.0]);
        let to = PhaseState::new(vec![0.995], vec![-0.09975]);
        let total = gla_log_density(&m, &ld, &from, &to, 0.1).unwrap();
        let no_det = ou_log_density(&m, &[0.0], &[0.0], 0.05).unwrap()
            + ou_log_density(&m, &[-0.09975], &[-0.09975], 0.05).unwrap();
        assert_abs_diff_eq!(total - no_det, 10f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn delta_e_examples() {
        let m = harmonic(1.0);
        let ld = verlet_lagrangian(&m);
        assert_eq!(delta_e(&m, &ld, &[0.4], &[0.4], 0.1).unwrap(), 0.0);
        let de = delta_e(&m, &ld, &[1.0], &[0.995], 0.1).unwrap();
        assert_abs_diff_eq!(de, 0.49998753125 - 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(de, -1.246875e-5, epsilon = 1e-14);
        assert_abs_diff_eq!(verlet_delta_e(&m, &[1.0], &[0.995], 0.1), de, epsilon = 1e-14);
    }

    #[test]
    fn magla_acceptance_examples() {
        let m = harmonic(1.0);
        let ld = verlet_lagrangian(&m);
        let from = PhaseState::new(vec![1.0], vec![0.0]);
        let to = PhaseState::new(vec![0.995], vec![-0.09975]);
        assert_eq!(magla_acceptance(&m, &ld, &from, &to, 0.1).unwrap(), 1.0);

        let q = InertialModel::with_unit_mass(make_quartic_model(1.0).unwrap(), 1.0).unwrap();
        let ld = verlet_lagrangian(&q);
        let a = magla_acceptance(&q, &ld, &PhaseState::new(vec![1.5], vec![0.3]), &PhaseState::new(vec![1.9], vec![1.0]), 0.5)
            .unwrap();
        let b = magla_acceptance(&q, &ld, &PhaseState::new(vec![1.5], vec![-4.0]), &PhaseState::new(vec![1.9], vec![7.0]), 0.5)
            .unwrap();
        assert_eq!(a, b);
    }

    struct Skewed;

    impl DiscreteLagrangian for Skewed {
        fn d1(&self, q0: &[f64], _q1: &[f64], _h: f64) -> Result<Vec<f64>> {
            Ok(q0.to_vec())
        }
        fn d2(&self, _q0: &[f64], q1: &[f64], _h: f64) -> Result<Vec<f64>> {
            Ok(q1.iter().map(|v| 2.0 * v).collect())
        }
        fn log_abs_det_d12(&self, _q0: &[f64], _q1: &[f64], _h: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn is_self_adjoint(&self) -> bool {
            false
        }
    }

    #[test]
    fn magla_refuses_non_self_adjoint() {
        let m = harmonic(1.0);
        let s = PhaseState::new(vec![1.0], vec![0.0]);
        assert_eq!(magla_acceptance(&m, &Skewed, &s, &s, 0.1), Err(Error::NotSelfAdjoint));
        // The density form itself is still computable.
        assert!(magla_log_acceptance_via_densities(&m, &Skewed, &s, &s, 0.1).is_ok());
    }

    #[test]
    fn magla_free_particle_always_accepts() {
        let f = free(1, 1.0, vec![1.0]);
        let t = run_inertial_chain(&f, InertialMethod::Magla, &PhaseState::new(vec![0.0], vec![1.0]), 0.3, 500, RngStreamSpec::new(4, 0, StreamRole::Brownian), ChainOptions::default())
            .unwrap();
        assert!(t.steps.iter().all(|s| s.accepted && s.acceptance == 1.0));
    }

    #[test]
    fn magla_rejection_flips_momentum() {
        let q = InertialModel::with_unit_mass(make_quartic_model(1.0).unwrap(), 1.0).unwrap();
        let s = PhaseState::new(vec![3.0], vec![2.0]);
        // h large enough that the Verlet step overshoots badly.
        let o = magla_step(&q, &s, 0.9, &OuNoise::zeros(1), &OuNoise::zeros(1), 0.999_999).unwrap();
        assert!(!o.accepted);
        assert_eq!(o.state, PhaseState::new(vec![3.0], vec![-2.0]));
    }

    #[test]
    fn magla_is_reproducible() {
        let q = InertialModel::with_unit_mass(make_quartic_model(1.0).unwrap(), 1.0).unwrap();
        let s0 = PhaseState::new(vec![0.1], vec![0.0]);
        let spec = RngStreamSpec::new(2024, 3, StreamRole::Brownian);
        let a = run_inertial_chain(&q, InertialMethod::Magla, &s0, 0.25, 200, spec, ChainOptions::default()).unwrap();
        let b = run_inertial_chain(&q, InertialMethod::Magla, &s0, 0.25, 200, spec, ChainOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gla_zero_noise_blows_up_from_large_state() {
        let q = InertialModel::with_unit_mass(make_quartic_model(1.0).unwrap(), 1.0).unwrap();
        let opts = ChainOptions {
            zero_noise: true,
            ..ChainOptions::default()
        };
        let t = run_inertial_chain(&q, InertialMethod::Gla, &PhaseState::new(vec![10.0], vec![0.0]), 0.5, 100, RngStreamSpec::new(0, 0, StreamRole::Brownian), opts)
            .unwrap();
        assert!(t.blow_up.is_some());
    }

    #[test]
    fn gla_harmonic_small_step_stays_bounded() {
        let m = harmonic(1.0);
        let t = run_inertial_chain(&m, InertialMethod::Gla, &PhaseState::new(vec![1.0], vec![0.0]), 0.01, 10_000, RngStreamSpec::new(8, 0, StreamRole::Brownian), ChainOptions::default())
            .unwrap();
        assert!(t.blow_up.is_none());
        assert!(t.steps.iter().all(|s| s.state.q.iter().chain(&s.state.p).all(|v| v.abs() < 20.0)));
    }

    #[test]
    fn magla_quartic_never_blows_up() {
        let q = InertialModel::with_unit_mass(make_quartic_model(1.0).unwrap(), 1.0).unwrap();
        let mut n = 0usize;
        let b = drive_inertial_chain(&q, InertialMethod::Magla, &PhaseState::new(vec![0.1], vec![0.0]), 0.25, 100_000, RngStreamSpec::new(77, 0, StreamRole::Brownian), ChainOptions::default(), |_, _| n += 1)
            .unwrap();
        assert!(b.is_none());
        assert_eq!(n, 100_000);
    }
}
