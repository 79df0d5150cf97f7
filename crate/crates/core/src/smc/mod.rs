//! Bootstrap particle filter and fixed-lag particle smoother.
//!
//! The filter propagates from the transition density, weights by the
//! observation density and resamples systematically at every step. The full
//! particle history is kept so the smoother can trace genealogies backwards.

mod filter;
mod resample;
mod smoother;

use thiserror::Error;

use crate::models::ModelError;

pub use filter::{bootstrap_pf, bootstrap_pf_with_rng, ParticleSystem};
pub use resample::systematic_resample;
pub(crate) use resample::resample_into;
pub use smoother::{
    fixed_lag_natural_score, fixed_lag_score, fixed_lag_state_moments, genealogy_natural_score, ParticleScore,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmcError {
    #[error("at least 2 particles are required, got {0}")]
    TooFewParticles(usize),
    #[error("particle weights collapsed to zero at t = {t}")]
    Collapse { t: usize },
    #[error("smoothing lag must be at least 1")]
    InvalidLag,
    #[error(transparent)]
    Model(#[from] ModelError),
}
