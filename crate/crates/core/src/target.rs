//! Log-target densities in unconstrained coordinates.
//!
//! `log pi(theta_bar) = log p(y | theta) + log p(theta) + log |d theta / d theta_bar|`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kalman;
use crate::models::{
    chain_rule, grad_log_prior_unconstrained, log_prior, natural_values, DataSet, Model, ModelError,
};
use crate::rng::stream_rng;
use crate::smc::{self, SmcError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error("{0}")]
    Incompatible(String),
}

/// Identifies the random stream used by a stochastic evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalKey {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_target: f64,
    pub log_likelihood: f64,
    /// Present when requested and the point has positive density.
    pub gradient: Option<DVector<f64>>,
}

impl Evaluation {
    pub fn zero_density() -> Self {
        Evaluation { log_target: f64::NEG_INFINITY, log_likelihood: f64::NEG_INFINITY, gradient: None }
    }
}

pub trait LogTarget: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, theta_bar: &DVector<f64>, with_gradient: bool, key: EvalKey) -> Result<Evaluation, TargetError>;

    /// Reporting coordinates of a chain state.
    fn to_natural(&self, theta_bar: &DVector<f64>) -> DVector<f64> {
        theta_bar.clone()
    }

    fn parameter_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("theta_{i}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backend {
    Kalman,
    Particle { particles: usize, lag: usize },
}

/// Posterior of a state-space model's parameters given a data set.
#[derive(Debug, Clone)]
pub struct SsmTarget {
    model: Model,
    data: DataSet,
    backend: Backend,
}

impl SsmTarget {
    pub fn new(model: Model, data: DataSet, backend: Backend) -> Result<Self, TargetError> {
        match (&model, backend) {
            (Model::Sv(_), Backend::Kalman) => {
                return Err(TargetError::Incompatible("the Kalman backend requires the LGSS model".into()))
            }
            (_, Backend::Particle { particles, .. }) if particles < 2 => {
                return Err(SmcError::TooFewParticles(particles).into())
            }
            (_, Backend::Particle { lag: 0, .. }) => return Err(SmcError::InvalidLag.into()),
            _ => {}
        }
        Ok(SsmTarget { model, data, backend })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }
}

impl LogTarget for SsmTarget {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evaluate(&self, theta_bar: &DVector<f64>, with_gradient: bool, key: EvalKey) -> Result<Evaluation, TargetError> {
        if theta_bar.len() != self.dim() {
            return Err(ModelError::Dimension { expected: self.dim(), found: theta_bar.len() }.into());
        }
        let transforms = self.model.transforms();
        let theta = natural_values(transforms, theta_bar);
        let log_jac: f64 = transforms.iter().zip(theta_bar.iter()).map(|(t, &u)| t.log_abs_derivative(u)).sum();
        let lp = log_prior(self.model.priors(), theta.as_slice()) + log_jac;
        if !lp.is_finite() {
            return Ok(Evaluation::zero_density());
        }
        let y = self.data.observations();
        let (log_likelihood, natural_grad) = match (&self.model, self.backend) {
            (Model::Lgss(m), Backend::Kalman) => {
                if with_gradient {
                    let (ll, g) = kalman::loglik_and_score(m, theta.as_slice(), y)?;
                    (ll, Some(g.to_vec()))
                } else {
                    (kalman::filter(m, theta.as_slice(), y)?.log_likelihood, None)
                }
            }
            (_, Backend::Particle { particles, lag }) => {
                let mut rng = stream_rng(key.seed, key.stream);
                crate::with_model!(&self.model, m => {
                    let sys = smc::bootstrap_pf_with_rng(m, theta.as_slice(), y, particles, &mut rng)?;
                    let g = if with_gradient {
                        Some(smc::fixed_lag_natural_score(m, theta.as_slice(), y, &sys, lag)?)
                    } else {
                        None
                    };
                    (sys.log_likelihood(), g)
                })
            }
            (Model::Sv(_), Backend::Kalman) => unreachable!("rejected at construction"),
        };
        let gradient = natural_grad.map(|g| {
            chain_rule(transforms, theta_bar, &g) + grad_log_prior_unconstrained(transforms, self.model.priors(), theta_bar)
        });
        Ok(Evaluation { log_target: log_likelihood + lp, log_likelihood, gradient })
    }

    fn to_natural(&self, theta_bar: &DVector<f64>) -> DVector<f64> {
        natural_values(self.model.transforms(), theta_bar)
    }

    fn parameter_names(&self) -> Vec<String> {
        self.model.parameter_names().iter().map(|s| s.to_string()).collect()
    }
}

/// Unnormalized Gaussian log-density `-(x - m)^T P (x - m) / 2`; for sampler validation.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Option<Self> {
        let precision = crate::gaussian::spd_inverse(&covariance)?;
        Some(GaussianTarget { mean, precision })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianTarget { mean: DVector::zeros(dim), precision: DMatrix::identity(dim, dim) }
    }
}

impl LogTarget for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn evaluate(&self, x: &DVector<f64>, with_gradient: bool, _key: EvalKey) -> Result<Evaluation, TargetError> {
        let d = x - &self.mean;
        let pd = &self.precision * &d;
        let log_target = -0.5 * d.dot(&pd);
        Ok(Evaluation { log_target, log_likelihood: log_target, gradient: with_gradient.then(|| -pd) })
    }
}

/// Log-target and (optionally) its gradient for a model, data set and backend.
pub fn log_target(
    model: &Model,
    data: &DataSet,
    backend: Backend,
    theta_bar: &DVector<f64>,
    with_gradient: bool,
    seed: u64,
) -> Result<Evaluation, TargetError> {
    SsmTarget::new(model.clone(), data.clone(), backend)?.evaluate(theta_bar, with_gradient, EvalKey { seed, stream: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Lgss, ModelKind, ParameterVector, SvLeverage};

    fn lgss_data() -> DataSet {
        crate::models::simulate(&Lgss::default(), &[0.2, 0.5, 1.0], 80, 4).unwrap()
    }

    #[test]
    fn kalman_target_gradient_matches_finite_differences() {
        let target = SsmTarget::new(Model::default_for(ModelKind::Lgss), lgss_data(), Backend::Kalman).unwrap();
        let key = EvalKey { seed: 0, stream: 0 };
        let u = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let g = target.evaluate(&u, true, key).unwrap().gradient.unwrap();
        for i in 0..3 {
            let h = 1e-5;
            let mut a = u.clone();
            let mut b = u.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (target.evaluate(&a, false, key).unwrap().log_target
                - target.evaluate(&b, false, key).unwrap().log_target)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn log_target_adds_prior_and_jacobian() {
        let model = Model::default_for(ModelKind::Lgss);
        let data = lgss_data();
        let u = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let e = log_target(&model, &data, Backend::Kalman, &u, false, 0).unwrap();
        let pv = ParameterVector::new(u.clone(), crate::models::Space::Unconstrained);
        let nat = model.to_natural(&pv).unwrap();
        let expected = e.log_likelihood + model.log_prior(&nat).unwrap() + model.log_jacobian(&pv).unwrap();
        assert!((e.log_target - expected).abs() < 1e-12);
    }

    #[test]
    fn kalman_with_sv_is_rejected() {
        let data = DataSet::observations_only(vec![0.1]).unwrap();
        assert!(matches!(
            SsmTarget::new(Model::Sv(SvLeverage::default()), data, Backend::Kalman),
            Err(TargetError::Incompatible(_))
        ));
    }

    #[test]
    fn particle_evaluation_is_keyed() {
        let target = SsmTarget::new(
            Model::default_for(ModelKind::Lgss),
            lgss_data(),
            Backend::Particle { particles: 100, lag: 10 },
        )
        .unwrap();
        let u = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let a = target.evaluate(&u, true, EvalKey { seed: 3, stream: 7 }).unwrap();
        let b = target.evaluate(&u, true, EvalKey { seed: 3, stream: 7 }).unwrap();
        let c = target.evaluate(&u, true, EvalKey { seed: 3, stream: 8 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.log_likelihood, c.log_likelihood);
    }

    #[test]
    fn zero_prior_density_short_circuits() {
        // exp(theta_bar) overflows to infinity, outside any Gamma support check
        let target = SsmTarget::new(Model::default_for(ModelKind::Lgss), lgss_data(), Backend::Kalman).unwrap();
        let u = DVector::from_vec(vec![0.0, 0.0, 800.0]);
        let e = target.evaluate(&u, true, EvalKey { seed: 0, stream: 0 }).unwrap();
        assert_eq!(e.log_target, f64::NEG_INFINITY);
        assert!(e.gradient.is_none());
    }

    #[test]
    fn gaussian_target_gradient() {
        let t = GaussianTarget::new(DVector::from_vec(vec![1.0, -1.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]))
            .unwrap();
        let x = DVector::from_vec(vec![0.3, 0.2]);
        let e = t.evaluate(&x, true, EvalKey { seed: 0, stream: 0 }).unwrap();
        let g = e.gradient.unwrap();
        for i in 0..2 {
            let h = 1e-6;
            let mut a = x.clone();
            a[i] += h;
            let mut b = x.clone();
            b[i] -= h;
            let k = EvalKey { seed: 0, stream: 0 };
            let fd = (t.evaluate(&a, false, k).unwrap().log_target - t.evaluate(&b, false, k).unwrap().log_target) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }
}
