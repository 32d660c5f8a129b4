//! Compress the predictive distribution of a high-dimensional linear model into
//! a sparse, interpretable surrogate by minimizing p-Wasserstein distance
//! between prediction ensembles.
//!
//! The crate is organized around the moving parts of that pipeline:
//!
//! - [`ot`] — exact and approximate optimal transport between equal-size
//!   empirical prediction clouds.
//! - [`ensemble`] — the data model: parameter draws, prediction ensembles,
//!   interpretation neighborhoods, kernels, and simulation generators.
//! - [`slim_a`] — model-agnostic surrogates: group-penalized multi-task
//!   L_p regression over per-draw coefficient vectors.
//! - [`slim_p`] — coefficient-preserving surrogates: binary masks over the
//!   original coefficients chosen by an alternating transport/quadratic scheme.
//! - [`search`] — model-size-targeted combinatorial searches (best subsets,
//!   simulated annealing, backward stepwise).
//! - [`metrics`] — Wasserstein R², average distances, relative-MSE
//!   evaluations, and leave-one-covariate-out importance.

pub mod ensemble;
mod error;
pub mod linalg;
pub mod metrics;
pub mod ot;
pub mod search;
pub mod seeding;
pub mod slim_a;
pub mod slim_p;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use error::{Error, Result};

/// Row-norm threshold below which a coefficient group counts as inactive.
pub const ACTIVE_GROUP_TOL: f64 = 1e-10;
