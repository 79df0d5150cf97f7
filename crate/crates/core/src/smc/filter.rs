use rand::Rng;
use rand_distr::StandardNormal;

use super::{resample_into, SmcError};
use crate::models::{ModelError, StateSpaceModel};
use crate::rng::{stream_rng, StreamRng};

/// Full output of one bootstrap filter run.
///
/// Row `t` of each table (`0..=T`) holds the `N` particles after
/// propagation and weighting at time `t`. Ancestor row `t - 1` maps particle
/// `i` at time `t` to its parent at time `t - 1` (0-based indices).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    particles: usize,
    steps: usize,
    states: Vec<f64>,
    weights: Vec<f64>,
    ancestors: Vec<u32>,
    increments: Vec<f64>,
    log_likelihood: f64,
}

impl ParticleSystem {
    pub fn particles(&self) -> usize {
        self.particles
    }

    /// Number of observations `T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn states_at(&self, t: usize) -> &[f64] {
        &self.states[t * self.particles..(t + 1) * self.particles]
    }

    /// Normalized weights at time `t`.
    pub fn weights_at(&self, t: usize) -> &[f64] {
        &self.weights[t * self.particles..(t + 1) * self.particles]
    }

    /// Parents (at `t - 1`) of the particles at time `t >= 1`.
    pub fn ancestors_at(&self, t: usize) -> &[u32] {
        &self.ancestors[(t - 1) * self.particles..t * self.particles]
    }

    /// `log p(y_t | y_{1:t-1})` estimates, `t = 1..=T` at index `t - 1`.
    pub fn log_likelihood_increments(&self) -> &[f64] {
        &self.increments
    }

    /// Log of the (unbiased) estimate of `p(y_{1:T})`.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }
}

pub fn bootstrap_pf<M: StateSpaceModel>(
    model: &M,
    theta: &[f64],
    y: &[f64],
    particles: usize,
    seed: u64,
) -> Result<ParticleSystem, SmcError> {
    bootstrap_pf_with_rng(model, theta, y, particles, &mut stream_rng(seed, 0))
}

pub fn bootstrap_pf_with_rng<M: StateSpaceModel>(
    model: &M,
    theta: &[f64],
    y: &[f64],
    particles: usize,
    rng: &mut StreamRng,
) -> Result<ParticleSystem, SmcError> {
    if particles < 2 {
        return Err(SmcError::TooFewParticles(particles));
    }
    let p = model.prepare(theta)?;
    let n = particles;
    let steps = y.len();
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut weights = Vec::with_capacity((steps + 1) * n);
    let mut ancestors = vec![0u32; steps * n];
    let mut increments = Vec::with_capacity(steps);
    let mut log_w = vec![0.0; n];

    let init = model.initial(&p);
    let init_sd = init.var.sqrt();
    for _ in 0..n {
        states.push(init.mean + init_sd * rng.sample::<f64, _>(StandardNormal));
    }
    weights.resize(n, 1.0 / n as f64);

    let ln_n = (n as f64).ln();
    let mut log_likelihood = 0.0;
    for t in 1..=steps {
        let prev = (t - 1) * n;
        let anc = &mut ancestors[prev..t * n];
        let u: f64 = rng.random();
        resample_into(&weights[prev..prev + n], u, anc).map_err(|_| SmcError::Collapse { t: t - 1 })?;

        let y_prev = if t >= 2 { Some(y[t - 2]) } else { None };
        let obs = y[t - 1];
        let mut max_w = f64::NEG_INFINITY;
        for i in 0..n {
            let x_prev = states[prev + anc[i] as usize];
            let m = model
                .transition(&p, x_prev, y_prev)
                .map_err(|_| ModelError::NotPositiveDefinite { t: t - 1, x: x_prev })?;
            let x = m.mean + m.var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            states.push(x);
            let lw = model.log_observation(&p, x, obs);
            log_w[i] = lw;
            if lw > max_w {
                max_w = lw;
            }
        }
        if !max_w.is_finite() {
            return Err(SmcError::Collapse { t });
        }
        let mut total = 0.0;
        for lw in log_w.iter_mut() {
            *lw = (*lw - max_w).exp();
            total += *lw;
        }
        let inv = 1.0 / total;
        weights.extend(log_w.iter().map(|w| w * inv));
        let inc = max_w + total.ln() - ln_n;
        increments.push(inc);
        log_likelihood += inc;
    }

    Ok(ParticleSystem { particles: n, steps, states, weights, ancestors, increments, log_likelihood })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Lgss, SvLeverage};

    #[test]
    fn weights_are_normalized_and_ancestors_in_range() {
        let model = Lgss::default();
        let data = crate::models::simulate(&model, &[0.2, 0.5, 1.0], 30, 1).unwrap();
        let sys = bootstrap_pf(&model, &[0.2, 0.5, 1.0], data.observations(), 64, 9).unwrap();
        for t in 0..=30 {
            let s: f64 = sys.weights_at(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            if t > 0 {
                assert!(sys.ancestors_at(t).iter().all(|&a| (a as usize) < 64));
            }
        }
        assert!(sys.log_likelihood_increments().iter().all(|v| v.is_finite()));
        let total: f64 = sys.log_likelihood_increments().iter().sum();
        assert!((total - sys.log_likelihood()).abs() < 1e-9);
    }

    #[test]
    fn identical_seed_gives_identical_system() {
        let model = SvLeverage::default();
        let theta = [0.5, 0.9, 0.3, -0.1];
        let data = crate::models::simulate(&model, &theta, 40, 2).unwrap();
        let a = bootstrap_pf(&model, &theta, data.observations(), 100, 17).unwrap();
        let b = bootstrap_pf(&model, &theta, data.observations(), 100, 17).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_pf(&model, &theta, data.observations(), 100, 18).unwrap();
        assert_ne!(a.log_likelihood(), c.log_likelihood());
    }

    #[test]
    fn single_step_estimate_is_mean_observation_density_over_prior_draws() {
        let model = Lgss::default();
        let theta = [0.2, 0.5, 1.0];
        let y = [0.8];
        let sys = bootstrap_pf(&model, &theta, &y, 500, 3).unwrap();
        let p = model.prepare(&theta).unwrap();
        let mean_g: f64 =
            sys.states_at(1).iter().map(|&x| model.log_observation(&p, x, y[0]).exp()).sum::<f64>() / 500.0;
        assert!((sys.log_likelihood() - mean_g.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_few_particles() {
        let model = Lgss::default();
        assert_eq!(
            bootstrap_pf(&model, &[0.0, 0.5, 1.0], &[0.1], 1, 0).unwrap_err(),
            SmcError::TooFewParticles(1)
        );
    }

    #[test]
    fn non_pd_transition_is_reported_with_time() {
        let model = SvLeverage::default();
        let err = bootstrap_pf(&model, &[-5.0, 0.5, 0.01, 0.9], &[0.1, 0.2, 0.1], 10, 0).unwrap_err();
        assert!(matches!(err, SmcError::Model(ModelError::NotPositiveDefinite { t: 1, .. })));
    }
}
