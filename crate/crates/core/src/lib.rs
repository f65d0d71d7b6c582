//! Unadjusted Langevin sampling on strongly log-concave targets, with exact
//! Gaussian diagnostics, certified finite-step error bounds, empirical
//! order-of-accuracy estimators, and a reproducible experiment harness.
//!
//! The library is organized around a small pipeline:
//!
//! * [`potentials`] defines the target potentials (diagonal quadratics and
//!   two smooth non-Gaussian families) together with their curvature
//!   constants and third-derivative growth estimates.
//! * [`sampler`] runs the discrete Langevin chain with counter-based,
//!   schedule-independent noise, in parallel over replicas.
//! * [`analytic`] carries the closed-form iterate laws on quadratic targets,
//!   Wasserstein distances between product Gaussians, and an exact
//!   mixing-time search.
//! * [`bounds`] evaluates the certified error and mixing-time bounds from a
//!   ledger of integrator constants.
//! * [`estimators`] fits empirical convergence orders and contraction rates
//!   and checks moment growth conditions.
//! * [`harness`] wires everything into reproducible CLI experiments with
//!   plain-text configs and CSV output.

pub mod analytic;
pub mod bounds;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod potentials;
pub mod sampler;

pub use error::{Error, Result};
