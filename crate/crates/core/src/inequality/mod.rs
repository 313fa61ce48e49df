//! Estimation of coercive-inequality constants over test-function families.
//!
//! Each fit produces a [`FitReport`](crate::report::FitReport) with the
//! fitted constants and the per-function evidence. Two-coefficient
//! inequalities of the form `L(f) <= c1 A(f) + c2 B(f)` are fitted in two
//! steps: the primary coefficient is pinned by the sub-family with
//! `B(f) = 0` (where it is the plain ratio sup), and the secondary
//! coefficient is then the smallest value covering the remaining functions
//! at that primary. The theorems under test hinge on the secondary
//! coefficient staying below one.

use thiserror::Error;

pub mod covariance;
pub mod global;
pub mod poincare;
pub mod qn;
pub mod sweep;
pub mod ubound;
pub mod weak_lsi;

pub use covariance::check_covariance_lemma;
pub use global::{global_lsi, tail_bound_check};
pub use poincare::fit_poincare;
pub use qn::{check_entropy_telescoping, qn_decay_mcmc, qn_decay_oracle};
pub use sweep::{fit_sqrt_sweep, fit_sweep_contraction};
pub use ubound::fit_ubound;
pub use weak_lsi::fit_weak_lsi;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("degenerate family: {0}")]
    DegenerateFamily(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("function must be strictly positive: {0}")]
    NotPositive(String),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// One constraint `lhs <= c1 * a + c2 * b` contributed by a test function.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub lhs: f64,
    pub a: f64,
    pub b: f64,
    pub lhs_stderr: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TwoSidedFit {
    pub primary: f64,
    pub secondary: f64,
}

/// Pin the primary coefficient on the `b = 0` sub-family, then take the
/// smallest secondary coefficient covering everything else.
pub fn fit_two_sided(constraints: &[Constraint]) -> Result<TwoSidedFit, FitError> {
    const EPS: f64 = 1e-12;
    let mut primary = 0.0_f64;
    let mut have_primary = false;
    for c in constraints {
        if c.b.abs() <= EPS && c.a > EPS {
            primary = primary.max(c.lhs / c.a);
            have_primary = true;
        }
    }
    if !have_primary {
        return Err(FitError::DegenerateFamily(
            "no secondary-free member pins the primary coefficient".to_string(),
        ));
    }
    let mut secondary = 0.0_f64;
    for c in constraints {
        if c.b > EPS {
            secondary = secondary.max(((c.lhs - primary * c.a) / c.b).max(0.0));
        }
    }
    Ok(TwoSidedFit { primary, secondary })
}
