//! State-space models, priors and parameter transforms.
//!
//! Both shipped models have a scalar latent state `x_t` observed through `y_t`:
//!
//! * [`Lgss`]: `x_{t+1} = mu + phi (x_t - mu) + sigma_v v_t`, `y_t = x_t + 0.5 e_t`.
//! * [`SvLeverage`]: `(x_{t+1}, y_t) | x_t` jointly Gaussian with covariance
//!   `[[sigma_v^2, rho], [rho, exp(x_t)]]`.
//!
//! Chains run in unconstrained coordinates (`phi = tanh(phi_bar)`,
//! `sigma_v = exp(sigma_bar)`, `rho = tanh(rho_bar)`); the helpers here move
//! values and gradients between the two systems.

mod data;
mod lgss;
mod params;
mod prior;
mod sv;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::DataSet;
pub use lgss::Lgss;
pub use params::{log_jacobian, to_natural, to_unconstrained, ParameterVector, Space, Transform};
pub use prior::{log_prior, Prior};
pub use sv::SvLeverage;

pub(crate) use params::natural_values;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("expected parameters in {expected:?} space, got {found:?}")]
    WrongSpace { expected: Space, found: Space },
    #[error("expected {expected} parameters, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("parameter {index} = {value} is outside the model support")]
    OutOfSupport { index: usize, value: f64 },
    #[error("|phi| = {0} >= 1: no stationary initial distribution")]
    NonStationary(f64),
    #[error("joint noise covariance is not positive definite at t = {t} (x_t = {x})")]
    NotPositiveDefinite { t: usize, x: f64 },
    #[error("invalid data set: {0}")]
    InvalidData(String),
}

/// Mean and variance of a scalar Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

/// Marker returned when a transition covariance is not positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvalidTransition;

/// A scalar-state model with Gaussian transition and observation densities.
///
/// Parameters are always natural-coordinate values; `prepare` validates them
/// once and caches derived constants for the per-particle hot paths.
pub trait StateSpaceModel: Send + Sync {
    type Params: Copy + Send + Sync;

    fn kind(&self) -> ModelKind;
    fn transforms(&self) -> &[Transform];
    fn priors(&self) -> &[Prior];
    fn parameter_names(&self) -> &[&'static str];

    fn dim(&self) -> usize {
        self.transforms().len()
    }

    fn prepare(&self, theta: &[f64]) -> Result<Self::Params, ModelError>;

    /// Distribution of `x_0`.
    fn initial(&self, p: &Self::Params) -> Moments;

    /// Distribution of `x_{t+1}` given `x_t` and, when available, `y_t`.
    fn transition(
        &self,
        p: &Self::Params,
        x: f64,
        y: Option<f64>,
    ) -> Result<Moments, InvalidTransition>;

    fn log_observation(&self, p: &Self::Params, x: f64, y: f64) -> f64;

    /// Draw `y_t` given `x_t` from a standard normal variate.
    fn sample_observation(&self, p: &Self::Params, x: f64, noise: f64) -> f64;

    /// Adds `weight * d/dtheta log mu_theta(x0)` into `acc`.
    fn initial_score(&self, p: &Self::Params, x0: f64, weight: f64, acc: &mut [f64]);

    /// Adds `weight * d/dtheta log p_theta(x_next | x, y)` into `acc`.
    fn transition_score(
        &self,
        p: &Self::Params,
        x: f64,
        x_next: f64,
        y: Option<f64>,
        weight: f64,
        acc: &mut [f64],
    );

    /// Adds `weight * d/dtheta log g_theta(y | x)` into `acc`. Neither shipped
    /// model has parameters in its observation density.
    fn observation_score(&self, _p: &Self::Params, _x: f64, _y: f64, _weight: f64, _acc: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lgss,
    Sv,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lgss => "lgss",
            ModelKind::Sv => "sv",
        })
    }
}

/// Closed set of shipped models.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Lgss(Lgss),
    Sv(SvLeverage),
}

/// Run `$body` with `$m` bound to the concrete model inside `$model`.
#[macro_export]
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::models::Model::Lgss($m) => $body,
            $crate::models::Model::Sv($m) => $body,
        }
    };
}

impl Model {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lgss => Model::Lgss(Lgss::default()),
            ModelKind::Sv => Model::Sv(SvLeverage::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        with_model!(self, m => m.kind())
    }

    pub fn dim(&self) -> usize {
        with_model!(self, m => m.dim())
    }

    pub fn transforms(&self) -> &[Transform] {
        with_model!(self, m => m.transforms())
    }

    pub fn priors(&self) -> &[Prior] {
        with_model!(self, m => m.priors())
    }

    pub fn parameter_names(&self) -> &[&'static str] {
        with_model!(self, m => m.parameter_names())
    }

    pub fn to_unconstrained(&self, theta: &ParameterVector) -> Result<ParameterVector, ModelError> {
        to_unconstrained(self.transforms(), theta)
    }

    pub fn to_natural(&self, theta_bar: &ParameterVector) -> Result<ParameterVector, ModelError> {
        to_natural(self.transforms(), theta_bar)
    }

    pub fn log_jacobian(&self, theta_bar: &ParameterVector) -> Result<f64, ModelError> {
        log_jacobian(self.transforms(), theta_bar)
    }

    /// Sum of prior log densities; `-inf` outside the support.
    pub fn log_prior(&self, theta: &ParameterVector) -> Result<f64, ModelError> {
        theta.expect_space(Space::Natural)?;
        if theta.len() != self.dim() {
            return Err(ModelError::Dimension { expected: self.dim(), found: theta.len() });
        }
        Ok(log_prior(self.priors(), theta.as_slice()))
    }

    pub fn simulate(&self, theta: &ParameterVector, steps: usize, seed: u64) -> Result<DataSet, ModelError> {
        theta.expect_space(Space::Natural)?;
        with_model!(self, m => simulate(m, theta.as_slice(), steps, seed))
    }
}

/// Gradient of `log p(theta(u)) + log |J(u)|` with respect to `u`.
pub fn grad_log_prior_unconstrained(transforms: &[Transform], priors: &[Prior], u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        transforms.iter().zip(priors).zip(u.iter()).map(|((t, p), &x)| {
            let v = t.to_natural(x);
            p.grad_log_density(v) * t.derivative(x) + t.grad_log_abs_derivative(x)
        }),
    )
}

/// Chain rule: natural-coordinate gradient to unconstrained-coordinate gradient.
pub fn chain_rule(transforms: &[Transform], u: &DVector<f64>, natural_grad: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        transforms
            .iter()
            .zip(u.iter())
            .zip(natural_grad)
            .map(|((t, &x), &g)| g * t.derivative(x)),
    )
}

/// Draw a synthetic data set from `model` at natural parameters `theta`.
///
/// `x_0` comes from the initial distribution, `y_t | x_t` for `t = 1..=steps`,
/// and `x_{t+1}` from the transition conditioned on `(x_t, y_t)`.
pub fn simulate<M: StateSpaceModel>(model: &M, theta: &[f64], steps: usize, seed: u64) -> Result<DataSet, ModelError> {
    if steps == 0 {
        return Err(ModelError::InvalidData("at least one observation is required".into()));
    }
    let p = model.prepare(theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps);

    let init = model.initial(&p);
    let mut x = init.mean + init.var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    states.push(x);
    let mut y_prev = None;
    for t in 1..=steps {
        let m = model
            .transition(&p, x, y_prev)
            .map_err(|_| ModelError::NotPositiveDefinite { t: t - 1, x })?;
        x = m.mean + m.var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        states.push(x);
        let y = model.sample_observation(&p, x, rng.sample(StandardNormal));
        observations.push(y);
        y_prev = Some(y);
    }
    DataSet::new(observations, Some(states))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag_one_autocorrelation(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let cov = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>();
        cov / var
    }

    #[test]
    fn lgss_simulation_has_requested_length() {
        let model = Model::default_for(ModelKind::Lgss);
        let data = model.simulate(&ParameterVector::natural(&[0.2, 0.5, 1.0]), 500, 3).unwrap();
        assert_eq!(data.len(), 500);
        assert_eq!(data.states().unwrap().len(), 501);
    }

    #[test]
    fn lgss_simulation_is_reproducible() {
        let model = Model::default_for(ModelKind::Lgss);
        let theta = ParameterVector::natural(&[0.2, 0.5, 1.0]);
        assert_eq!(model.simulate(&theta, 50, 9).unwrap(), model.simulate(&theta, 50, 9).unwrap());
        assert_ne!(model.simulate(&theta, 50, 9).unwrap(), model.simulate(&theta, 50, 10).unwrap());
    }

    #[test]
    fn lgss_simulation_rejects_nonstationary_phi() {
        let model = Lgss::default();
        assert!(matches!(simulate(&model, &[0.0, 1.0, 1.0], 10, 1), Err(ModelError::NonStationary(_))));
        assert!(simulate(&model, &[0.0, 0.5, 1.0], 0, 1).is_err());
    }

    #[test]
    fn lgss_moments_match_ar1_theory() {
        // stationary mean 0.2, variance 1/(1-0.25); lag-one autocorrelation 0.5
        let model = Lgss::default();
        let n = 10_000;
        let data = simulate(&model, &[0.2, 0.5, 1.0], n, 11).unwrap();
        let x = data.states().unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let stationary_var = 1.0 / (1.0 - 0.25);
        // long-run variance of the AR(1) sample mean: var (1+phi)/(1-phi) / n
        let se_mean = (stationary_var * 3.0 / n as f64).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * se_mean, "mean {mean}");
        let r1 = lag_one_autocorrelation(x);
        let se_r1 = ((1.0 - 0.25) / n as f64).sqrt();
        assert!((r1 - 0.5).abs() < 3.0 * se_r1, "r1 {r1}");
    }

    #[test]
    fn sv_simulation_mean_matches_ar1_theory() {
        let model = SvLeverage::default();
        let n = 10_000;
        let data = simulate(&model, &[0.5, 0.9, 0.2, 0.0], n, 5).unwrap();
        let x = data.states().unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let stationary_var = 0.04 / (1.0 - 0.81);
        let se_mean = (stationary_var * (1.9 / 0.1) / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se_mean, "mean {mean}");
    }

    #[test]
    fn sv_simulation_reports_non_pd_covariance() {
        let model = SvLeverage::default();
        // sigma_v^2 exp(x) < rho^2 almost immediately with tiny sigma_v and low volatility
        let err = simulate(&model, &[-6.0, 0.5, 0.01, 0.9], 100, 2).unwrap_err();
        assert!(matches!(err, ModelError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn unconstrained_prior_gradient_matches_finite_differences() {
        let model = Lgss::default();
        let u = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let f = |u: &DVector<f64>| {
            let theta = natural_values(model.transforms(), u);
            log_prior(model.priors(), theta.as_slice())
                + log_jacobian(model.transforms(), &ParameterVector::new(u.clone(), Space::Unconstrained)).unwrap()
        };
        let g = grad_log_prior_unconstrained(model.transforms(), model.priors(), &u);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "component {i}: {fd} vs {}", g[i]);
        }
    }
}
