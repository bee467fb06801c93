//! Strong-error measurement and distributional diagnostics.
//!
//! A convergence study draws one Brownian path per realization on a fine grid,
//! integrates a fine-step unadjusted reference along it, and runs the method
//! under test at each coarse step size on coarsened increments of the same
//! path. Terminal mean-square errors are reduced in realization order so the
//! report does not depend on how realizations were scheduled.

pub mod brownian;
pub mod equilibrium;
pub mod fit;
pub mod invariance;
pub mod ks;
pub mod quadrature;
pub mod rejection;
pub mod study;

pub use brownian::{coarse_increment, coarse_ou_integral, generate_brownian_grid, BrownianIncrementGrid};
pub use equilibrium::{equilibrium_sample_1d, EquilibriumSampler};
pub use fit::{fit_order, OrderFit};
pub use invariance::{invariance_check, InvarianceReport, MarginalCheck};
pub use ks::{ks_distance, normal_cdf};
pub use rejection::{rejection_rate_study, RejectionReport, RejectionStudyConfig};
pub use study::{
    reference_trajectory, strong_error_study, ConvergenceReport, ConvergenceStudyConfig, Discard, DiscardReason,
    InitialPolicy, Method, ReferenceOutcome, StudyModel, StudyState,
};

use crate::error::{Error, Result};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub(crate) fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("threads", "must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Number of steps of size `step` in `total`, if it is an integer within a
/// relative tolerance of 1e-12.
pub fn exact_steps(total: f64, step: f64) -> Option<usize> {
    if !(total >= 0.0 && step > 0.0 && total.is_finite() && step.is_finite()) {
        return None;
    }
    let ratio = total / step;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-12 * ratio.max(1.0) {
        Some(rounded as usize)
    } else {
        None
    }
}
