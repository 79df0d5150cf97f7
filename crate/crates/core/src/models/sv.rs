use super::lgss::stationary_initial_score;
use super::{InvalidTransition, ModelError, ModelKind, Moments, Prior, StateSpaceModel, Transform};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stochastic volatility model with leverage, parameters `(mu, phi, sigma_v, rho)`.
///
/// `rho` is the off-diagonal entry of the joint covariance of `(x_{t+1}, y_t)`
/// given `x_t`, taken literally; configurations where
/// `sigma_v^2 exp(x_t) <= rho^2` have no valid density and are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct SvLeverage {
    pub priors: [Prior; 4],
}

impl Default for SvLeverage {
    fn default() -> Self {
        Self {
            priors: [
                Prior::Gaussian { mean: 0.0, sd: 1.0 },
                Prior::TruncatedGaussian { mean: 0.95, sd: 0.05, lower: -1.0, upper: 1.0 },
                Prior::Gamma { shape: 2.0, rate: 10.0 },
                Prior::TruncatedGaussian { mean: 0.0, sd: 1.0, lower: -1.0, upper: 1.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
    pub rho: f64,
    pub var: f64,
}

const TRANSFORMS: [Transform; 4] = [Transform::Identity, Transform::Tanh, Transform::Exp, Transform::Tanh];

impl SvParams {
    /// Moments of `x_{t+1}` given `x_t` and `y_t` by Gaussian conditioning on the joint covariance.
    #[inline]
    pub fn conditional(&self, x: f64, y: f64) -> Result<Moments, InvalidTransition> {
        let inv_vol = (-x).exp();
        let var = self.var - self.rho * self.rho * inv_vol;
        if var > 0.0 && var.is_finite() {
            Ok(Moments {
                mean: self.mu + self.phi * (x - self.mu) + self.rho * inv_vol * y,
                var,
            })
        } else {
            Err(InvalidTransition)
        }
    }
}

impl StateSpaceModel for SvLeverage {
    type Params = SvParams;

    fn kind(&self) -> ModelKind {
        ModelKind::Sv
    }

    fn transforms(&self) -> &[Transform] {
        &TRANSFORMS
    }

    fn priors(&self) -> &[Prior] {
        &self.priors
    }

    fn parameter_names(&self) -> &[&'static str] {
        &["mu", "phi", "sigma_v", "rho"]
    }

    fn prepare(&self, theta: &[f64]) -> Result<SvParams, ModelError> {
        if theta.len() != 4 {
            return Err(ModelError::Dimension { expected: 4, found: theta.len() });
        }
        let (mu, phi, sigma, rho) = (theta[0], theta[1], theta[2], theta[3]);
        if !mu.is_finite() {
            return Err(ModelError::OutOfSupport { index: 0, value: mu });
        }
        if !(phi.abs() < 1.0) {
            return Err(ModelError::NonStationary(phi.abs()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::OutOfSupport { index: 2, value: sigma });
        }
        if !(rho.abs() < 1.0) {
            return Err(ModelError::OutOfSupport { index: 3, value: rho });
        }
        Ok(SvParams { mu, phi, sigma, rho, var: sigma * sigma })
    }

    fn initial(&self, p: &SvParams) -> Moments {
        Moments { mean: p.mu, var: p.var / (1.0 - p.phi * p.phi) }
    }

    #[inline]
    fn transition(&self, p: &SvParams, x: f64, y: Option<f64>) -> Result<Moments, InvalidTransition> {
        match y {
            Some(y) => p.conditional(x, y),
            None => Ok(Moments { mean: p.mu + p.phi * (x - p.mu), var: p.var }),
        }
    }

    #[inline]
    fn log_observation(&self, _p: &SvParams, x: f64, y: f64) -> f64 {
        -0.5 * (LN_2PI + x + y * y * (-x).exp())
    }

    fn sample_observation(&self, _p: &SvParams, x: f64, noise: f64) -> f64 {
        (0.5 * x).exp() * noise
    }

    fn initial_score(&self, p: &SvParams, x0: f64, weight: f64, acc: &mut [f64]) {
        stationary_initial_score(p.mu, p.phi, p.sigma, x0, weight, acc);
    }

    #[inline]
    fn transition_score(&self, p: &SvParams, x: f64, x_next: f64, y: Option<f64>, weight: f64, acc: &mut [f64]) {
        let a = x - p.mu;
        let (inv_vol, lev) = match y {
            Some(y) => {
                let e = (-x).exp();
                (e, e * y)
            }
            None => (0.0, 0.0),
        };
        let mean = p.mu + p.phi * a + p.rho * lev;
        let var = p.var - p.rho * p.rho * inv_vol;
        let r = x_next - mean;
        let d_mean = weight * r / var;
        let d_var = weight * (-0.5 / var + 0.5 * r * r / (var * var));
        acc[0] += d_mean * (1.0 - p.phi);
        acc[1] += d_mean * a;
        acc[2] += d_var * 2.0 * p.sigma;
        acc[3] += d_mean * lev - d_var * 2.0 * p.rho * inv_vol;
    }
}
