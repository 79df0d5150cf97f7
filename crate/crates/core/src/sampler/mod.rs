//! Metropolis-Hastings samplers: preconditioned zeroth/first-order proposals
//! and the memory-based quasi-Newton proposal.

mod chain;
mod kernel;
mod trace;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quasi_newton::Strategy;
use crate::target::TargetError;

pub use chain::{pilot_run, run_chain, ChainSettings};
pub use kernel::{mh_accept, PmhKernel};
pub use trace::{ChainRecord, ChainTrace, Phase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid initial state: {0}")]
    InitialState(String),
    #[error("fewer than 2 distinct samples; cannot estimate a covariance")]
    TooFewDistinct,
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProposalKind {
    Pmh0,
    Pmh1,
    Qmh { strategy: Strategy },
}

impl std::fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProposalKind::Pmh0 => f.write_str("pmh0"),
            ProposalKind::Pmh1 => f.write_str("pmh1"),
            ProposalKind::Qmh { strategy } => write!(f, "{strategy}"),
        }
    }
}

impl std::str::FromStr for ProposalKind {
    type Err = String;

    /// Parses the names produced by `Display`: `pmh0`, `pmh1`, `dbfgs`,
    /// `ibfgs-flip`, `ebfgs-hyb`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use crate::quasi_newton::Correction;
        let correction = |c: &str| match c {
            "flip" => Ok(Correction::Flip),
            "reg" => Ok(Correction::Reg),
            "hyb" => Ok(Correction::Hyb),
            _ => Err(format!("unknown correction `{c}` in proposal `{s}`")),
        };
        match s.split_once('-') {
            None => match s {
                "pmh0" => Ok(ProposalKind::Pmh0),
                "pmh1" => Ok(ProposalKind::Pmh1),
                "dbfgs" => Ok(ProposalKind::Qmh { strategy: Strategy::Dbfgs }),
                _ => Err(format!("unknown proposal `{s}`")),
            },
            Some(("ibfgs", c)) => Ok(ProposalKind::Qmh { strategy: Strategy::Ibfgs(correction(c)?) }),
            Some(("ebfgs", c)) => Ok(ProposalKind::Qmh { strategy: Strategy::Ebfgs(correction(c)?) }),
            Some(_) => Err(format!("unknown proposal `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub kind: ProposalKind,
    pub step_size: f64,
    /// Covariance `P` for pMH proposals; identity when absent.
    pub preconditioner: Option<DMatrix<f64>>,
    /// Memory length `M` for qMH.
    pub memory: usize,
    /// Initial and fallback curvature scale: `B_0 = delta I`.
    pub delta: f64,
    /// Random-walk step for the first `M` qMH iterations.
    pub warmup_step: f64,
}

impl ProposalConfig {
    pub fn pmh0(step_size: f64, preconditioner: Option<DMatrix<f64>>) -> Self {
        ProposalConfig { kind: ProposalKind::Pmh0, step_size, preconditioner, memory: 0, delta: 1.0, warmup_step: 0.0 }
    }

    pub fn pmh1(step_size: f64, preconditioner: Option<DMatrix<f64>>) -> Self {
        ProposalConfig { kind: ProposalKind::Pmh1, ..ProposalConfig::pmh0(step_size, preconditioner) }
    }

    pub fn qmh(strategy: Strategy, step_size: f64, memory: usize, delta: f64, warmup_step: f64) -> Self {
        ProposalConfig { kind: ProposalKind::Qmh { strategy }, step_size, preconditioner: None, memory, delta, warmup_step }
    }

    pub fn preconditioner_or_identity(&self, dim: usize) -> DMatrix<f64> {
        self.preconditioner.clone().unwrap_or_else(|| DMatrix::identity(dim, dim))
    }

    pub fn validate(&self, dim: usize) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step size must be positive");
        }
        if let Some(p) = &self.preconditioner {
            if p.nrows() != dim || p.ncols() != dim {
                return bad("preconditioner dimension does not match the target");
            }
            if Cholesky::new(p.clone()).is_none() {
                return bad("preconditioner is not positive definite");
            }
        }
        if let ProposalKind::Qmh { .. } = self.kind {
            if self.memory < 2 {
                return bad("memory length must be at least 2");
            }
            if !(self.delta > 0.0 && self.delta.is_finite()) {
                return bad("delta must be positive");
            }
            if !(self.warmup_step > 0.0 && self.warmup_step.is_finite()) {
                return bad("warmup step must be positive");
            }
        }
        Ok(())
    }
}

/// Sample covariance (divisor `n - 1`), or `None` with fewer than two distinct points.
pub fn empirical_covariance(samples: &[DVector<f64>]) -> Option<DMatrix<f64>> {
    let first = samples.first()?;
    if samples.iter().all(|s| s == first) {
        return None;
    }
    let n = samples.len() as f64;
    let dim = first.len();
    let mean = samples.iter().fold(DVector::zeros(dim), |acc, s| acc + s) / n;
    let mut cov = DMatrix::zeros(dim, dim);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    Some(cov / (n - 1.0))
}

/// Adds growing multiples of the mean diagonal until `m` factorizes.
fn jitter_to_spd(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE.sqrt());
    let mut eps = 1e-10 * scale;
    while Cholesky::new(m.clone()).is_none() {
        m += DMatrix::identity(n, n) * eps;
        eps *= 10.0;
    }
    m
}

/// Sample covariance of the unconstrained states after the trace's burn-in,
/// jittered to be positive definite.
pub fn pilot_preconditioner(trace: &ChainTrace) -> Result<DMatrix<f64>, SamplerError> {
    let states: Vec<DVector<f64>> = trace.post_burn_in().iter().map(|r| r.theta.clone()).collect();
    empirical_covariance(&states).map(jitter_to_spd).ok_or(SamplerError::TooFewDistinct)
}

#[cfg(test)]
mod tests;
