use super::{InvalidTransition, ModelError, ModelKind, Moments, Prior, StateSpaceModel, Transform};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Linear Gaussian state-space model with parameters `(mu, phi, sigma_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lgss {
    pub observation_sd: f64,
    pub priors: [Prior; 3],
}

impl Default for Lgss {
    fn default() -> Self {
        Self {
            observation_sd: 0.5,
            priors: [
                Prior::Gaussian { mean: 0.0, sd: 1.0 },
                Prior::TruncatedGaussian { mean: 0.5, sd: 1.0, lower: -1.0, upper: 1.0 },
                Prior::Gamma { shape: 2.0, rate: 2.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LgssParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
    pub var: f64,
    pub obs_var: f64,
    log_obs_norm: f64,
}

const TRANSFORMS: [Transform; 3] = [Transform::Identity, Transform::Tanh, Transform::Exp];

impl StateSpaceModel for Lgss {
    type Params = LgssParams;

    fn kind(&self) -> ModelKind {
        ModelKind::Lgss
    }

    fn transforms(&self) -> &[Transform] {
        &TRANSFORMS
    }

    fn priors(&self) -> &[Prior] {
        &self.priors
    }

    fn parameter_names(&self) -> &[&'static str] {
        &["mu", "phi", "sigma_v"]
    }

    fn prepare(&self, theta: &[f64]) -> Result<LgssParams, ModelError> {
        if theta.len() != 3 {
            return Err(ModelError::Dimension { expected: 3, found: theta.len() });
        }
        let (mu, phi, sigma) = (theta[0], theta[1], theta[2]);
        if !mu.is_finite() {
            return Err(ModelError::OutOfSupport { index: 0, value: mu });
        }
        if !(phi.abs() < 1.0) {
            return Err(ModelError::NonStationary(phi.abs()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::OutOfSupport { index: 2, value: sigma });
        }
        let obs_var = self.observation_sd * self.observation_sd;
        Ok(LgssParams {
            mu,
            phi,
            sigma,
            var: sigma * sigma,
            obs_var,
            log_obs_norm: -0.5 * (LN_2PI + obs_var.ln()),
        })
    }

    fn initial(&self, p: &LgssParams) -> Moments {
        Moments { mean: p.mu, var: p.var / (1.0 - p.phi * p.phi) }
    }

    #[inline]
    fn transition(&self, p: &LgssParams, x: f64, _y: Option<f64>) -> Result<Moments, InvalidTransition> {
        Ok(Moments { mean: p.mu + p.phi * (x - p.mu), var: p.var })
    }

    #[inline]
    fn log_observation(&self, p: &LgssParams, x: f64, y: f64) -> f64 {
        let r = y - x;
        p.log_obs_norm - 0.5 * r * r / p.obs_var
    }

    fn sample_observation(&self, p: &LgssParams, x: f64, noise: f64) -> f64 {
        x + p.obs_var.sqrt() * noise
    }

    fn initial_score(&self, p: &LgssParams, x0: f64, weight: f64, acc: &mut [f64]) {
        stationary_initial_score(p.mu, p.phi, p.sigma, x0, weight, acc);
    }

    #[inline]
    fn transition_score(&self, p: &LgssParams, x: f64, x_next: f64, _y: Option<f64>, weight: f64, acc: &mut [f64]) {
        ar1_transition_score(p.mu, p.phi, p.sigma, x, x_next, weight, acc);
    }
}

/// Score of `N(x0; mu, sigma^2 / (1 - phi^2))` in `(mu, phi, sigma)`.
pub(crate) fn stationary_initial_score(mu: f64, phi: f64, sigma: f64, x0: f64, weight: f64, acc: &mut [f64]) {
    let a = x0 - mu;
    let one_m = 1.0 - phi * phi;
    let s2 = sigma * sigma;
    acc[0] += weight * one_m * a / s2;
    acc[1] += weight * (-phi / one_m + phi * a * a / s2);
    acc[2] += weight * (-1.0 / sigma + one_m * a * a / (s2 * sigma));
}

/// Score of `N(x_next; mu + phi (x - mu), sigma^2)` in `(mu, phi, sigma)`.
#[inline]
pub(crate) fn ar1_transition_score(mu: f64, phi: f64, sigma: f64, x: f64, x_next: f64, weight: f64, acc: &mut [f64]) {
    let a = x - mu;
    let r = (x_next - mu) - phi * a;
    let s2 = sigma * sigma;
    let wr = weight * r / s2;
    acc[0] += wr * (1.0 - phi);
    acc[1] += wr * a;
    acc[2] += weight * (-1.0 / sigma + r * r / (s2 * sigma));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_normal(x: f64, m: f64, v: f64) -> f64 {
        -0.5 * (LN_2PI + v.ln()) - 0.5 * (x - m).powi(2) / v
    }

    #[test]
    fn complete_data_scores_match_finite_differences() {
        let model = Lgss::default();
        let theta = [0.3, 0.6, 0.8];
        let (x0, x1) = (0.9, -0.4);
        let f_init = |t: &[f64]| log_normal(x0, t[0], t[2] * t[2] / (1.0 - t[1] * t[1]));
        let f_trans = |t: &[f64]| log_normal(x1, t[0] + t[1] * (x0 - t[0]), t[2] * t[2]);
        let p = model.prepare(&theta).unwrap();
        let mut g_init = [0.0; 3];
        let mut g_trans = [0.0; 3];
        model.initial_score(&p, x0, 1.0, &mut g_init);
        model.transition_score(&p, x0, x1, None, 1.0, &mut g_trans);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[i] += h;
            dn[i] -= h;
            let fd_init = (f_init(&up) - f_init(&dn)) / (2.0 * h);
            let fd_trans = (f_trans(&up) - f_trans(&dn)) / (2.0 * h);
            assert!((fd_init - g_init[i]).abs() < 1e-7);
            assert!((fd_trans - g_trans[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn prepare_checks_support() {
        let model = Lgss::default();
        assert!(matches!(model.prepare(&[0.0, -1.0, 1.0]), Err(ModelError::NonStationary(_))));
        assert!(matches!(model.prepare(&[0.0, 0.2, 0.0]), Err(ModelError::OutOfSupport { index: 2, .. })));
        assert!(model.prepare(&[0.0, 0.2]).is_err());
    }

    #[test]
    fn observation_density_uses_fixed_variance() {
        let model = Lgss::default();
        let p = model.prepare(&[0.0, 0.0, 1.0]).unwrap();
        assert!((model.log_observation(&p, 0.3, 1.0) - log_normal(1.0, 0.3, 0.25)).abs() < 1e-14);
    }
}
