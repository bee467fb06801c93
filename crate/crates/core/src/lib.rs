//! Metropolis-adjusted integrators for Langevin SDEs.
//!
//! The crate covers two families of chains:
//!
//! - overdamped Langevin `dY = -∇U(Y) dt + sqrt(2/β) dW`, discretized by
//!   Euler–Maruyama (ULA) and its Metropolized variants MALA and MALTA;
//! - inertial Langevin with Hamiltonian `H(q, p) = ½ pᵀM⁻¹p + U(q)`, discretized
//!   by the geometric Langevin algorithm (GLA: exact Ornstein–Uhlenbeck half
//!   steps around a Störmer–Verlet step) and its Metropolized variant MAGLA,
//!   which flips the momentum on rejection.
//!
//! The [`harness`] module measures pathwise (strong) accuracy against a
//! fine-grid reference driven by the same Brownian path, fits log–log orders,
//! and provides the distributional diagnostics used to check invariance.

pub mod error;
pub mod harness;
pub mod inertial;
pub mod model;
pub mod overdamped;
pub mod rng;

mod linalg;

pub use error::{Error, Result};
pub use model::{
    finite_difference_gradient, make_quartic_model, BlowUp, ChainOptions, ChainTrace,
    InertialModel, OverdampedState, PhaseState, PotentialKind, PotentialModel, StepOutcome,
};
pub use rng::{draw_gaussian_vector, RandomStream, RngStreamSpec, StreamRole};
