//! Potentials, states and step outcomes shared by the overdamped and inertial
//! chains.
//!
//! Every shipped potential is coordinate-separable, `U(x) = Σᵢ u(xᵢ)`, with a
//! one-dimensional profile `u`. The overdamped and inertial formulas never rely
//! on separability; the equilibrium sampler does, since it draws each
//! coordinate independently from `exp(-β u)`.

use crate::error::{ensure_len, ensure_positive, Error, Result};
use crate::linalg;

/// Shape of the one-dimensional profile `u` of a separable potential.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `u ≡ 0`: pure diffusion.
    Zero,
    /// `u(s) = s²/2`.
    Quadratic,
    /// `u(s) = s⁴/4`.
    Quartic,
    /// `u(s) = Σₖ cₖ sᵏ` with coefficients in increasing degree.
    Polynomial(Vec<f64>),
}

impl PotentialKind {
    pub fn tag(&self) -> &'static str {
        match self {
            PotentialKind::Zero => "zero",
            PotentialKind::Quadratic => "quadratic",
            PotentialKind::Quartic => "quartic",
            PotentialKind::Polynomial(_) => "polynomial",
        }
    }
}

/// Potential energy `U` on `Rⁿ` together with the inverse temperature `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    kind: PotentialKind,
    dimension: usize,
    beta: f64,
}

impl PotentialModel {
    pub fn new(kind: PotentialKind, dimension: usize, beta: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension", "must be at least 1"));
        }
        ensure_positive("beta", beta)?;
        if let PotentialKind::Polynomial(c) = &kind {
            if c.is_empty() {
                return Err(Error::invalid("coefficients", "empty coefficient list"));
            }
            if !linalg::all_finite(c) {
                return Err(Error::invalid("coefficients", "non-finite coefficient"));
            }
        }
        Ok(Self {
            kind,
            dimension,
            beta,
        })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Copy of the model at another inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.kind.clone(), self.dimension, beta)
    }

    /// One-dimensional profile `u(s)`.
    #[inline]
    pub fn profile_energy(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Quadratic => 0.5 * s * s,
            PotentialKind::Quartic => {
                let s2 = s * s;
                0.25 * s2 * s2
            }
            PotentialKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * s + ck),
        }
    }

    /// Derivative `u'(s)` of the profile.
    #[inline]
    pub fn profile_gradient(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Quadratic => s,
            PotentialKind::Quartic => s * s * s,
            PotentialKind::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * s + k as f64 * ck),
        }
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dimension);
        x.iter().map(|&s| self.profile_energy(s)).sum()
    }

    /// `U(x)`, rejecting wrong dimensions and non-finite values.
    pub fn checked_energy(&self, x: &[f64]) -> Result<f64> {
        ensure_len(self.dimension, x)?;
        let u = self.energy(x);
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::NonFinite("potential energy"))
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), out.len());
        for (o, &s) in out.iter_mut().zip(x) {
            *o = self.profile_gradient(s);
        }
    }

    /// Unnormalized log equilibrium density `-β U(x)`.
    pub fn log_target(&self, x: &[f64]) -> f64 {
        -self.beta * self.energy(x)
    }
}

/// Quartic model `U(x) = x⁴/4` in one dimension.
pub fn make_quartic_model(beta: f64) -> Result<PotentialModel> {
    PotentialModel::new(PotentialKind::Quartic, 1, beta)
}

/// Central-difference approximation of `∇U(x)`.
pub fn finite_difference_gradient(model: &PotentialModel, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    ensure_positive("eps", eps)?;
    ensure_len(model.dimension(), x)?;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = model.checked_energy(&probe)?;
        probe[i] = x[i] - eps;
        let down = model.checked_energy(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

/// Potential plus friction and a diagonal mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialModel {
    base: PotentialModel,
    gamma: f64,
    mass: Vec<f64>,
}

impl InertialModel {
    pub fn new(base: PotentialModel, gamma: f64, mass: Vec<f64>) -> Result<Self> {
        ensure_positive("gamma", gamma)?;
        ensure_len(base.dimension(), &mass)?;
        for &m in &mass {
            ensure_positive("mass", m)?;
        }
        Ok(Self { base, gamma, mass })
    }

    /// Unit masses in every coordinate.
    pub fn with_unit_mass(base: PotentialModel, gamma: f64) -> Result<Self> {
        let n = base.dimension();
        Self::new(base, gamma, vec![1.0; n])
    }

    pub fn base(&self) -> &PotentialModel {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn beta(&self) -> f64 {
        self.base.beta()
    }

    pub fn dimension(&self) -> usize {
        self.base.dimension()
    }

    /// `½ pᵀM⁻¹p`.
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.mass).map(|(pi, m)| pi * pi / m).sum::<f64>()
    }

    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        self.kinetic(p) + self.base.energy(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedState {
    pub x: Vec<f64>,
}

impl OverdampedState {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x }
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        Self { q, p }
    }

    /// The momentum flip `(q, p) ↦ (q, -p)`.
    pub fn flipped(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|v| -v).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.q) && linalg::all_finite(&self.p)
    }
}

/// Result of one Metropolized (or unadjusted) step.
///
/// Unadjusted steps report `acceptance = 1` and `accepted = true`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<S> {
    pub state: S,
    pub proposal: S,
    pub acceptance: f64,
    pub accepted: bool,
}

/// A chain terminated because the state left the guard box or went non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowUp {
    /// Zero-based index of the step whose output crossed the guard.
    pub step: usize,
    /// Largest absolute coordinate of the offending state (may be infinite or NaN).
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<S> {
    pub steps: Vec<StepOutcome<S>>,
    pub blow_up: Option<BlowUp>,
}

impl<S> ChainTrace<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn accepted_fraction(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.accepted).count() as f64 / self.steps.len() as f64
    }
}

/// Knobs shared by the chain drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOptions {
    /// A state with any coordinate beyond this magnitude counts as a blow-up.
    pub guard: f64,
    /// Replace every Brownian increment by zero (deterministic drift map).
    pub zero_noise: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            guard: 1e8,
            zero_noise: false,
        }
    }
}

impl ChainOptions {
    pub(crate) fn exceeds_guard(&self, v: &[f64]) -> Option<f64> {
        let m = v.iter().fold(0.0_f64, |m, s| if s.is_nan() { f64::NAN } else { m.max(s.abs()) });
        if m.is_nan() || m > self.guard {
            Some(m)
        } else {
            None
        }
    }
}
