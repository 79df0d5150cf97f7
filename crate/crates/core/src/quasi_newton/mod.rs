//! Limited-memory quasi-Newton curvature estimates and the proposal built on them.
//!
//! The memory holds the last `M` chain states with their gradients. Its
//! distinct points, sorted by log-target, give the curvature pairs for a BFGS
//! recursion started at `delta I`. The estimate approximates the negative
//! Hessian of the log-target and is used as the proposal precision (after
//! scaling by `1 / eps^2`).

mod curvature;
mod memory;
mod proposal;

use thiserror::Error;

pub use curvature::{bfgs_update, build_curvature, correct_curvature, damped_bfgs_update, Correction, CurvatureEstimate, Strategy};
pub use memory::{extract_sorted_unique, GradientMemory, MemoryEntry};
pub use proposal::QnProposal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QnError {
    #[error("the hybrid correction needs an empirical posterior covariance")]
    MissingEmpiricalCovariance,
}
