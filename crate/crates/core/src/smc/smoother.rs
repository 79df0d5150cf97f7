use nalgebra::DVector;

use super::{bootstrap_pf_with_rng, ParticleSystem, SmcError};
use crate::models::{
    chain_rule, grad_log_prior_unconstrained, natural_values, DataSet, Moments, ParameterVector, Space,
    StateSpaceModel,
};
use crate::rng::StreamRng;

/// Particle estimate of the log-likelihood together with the log-target gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleScore {
    pub log_likelihood: f64,
    /// Gradient of log-likelihood + log-prior + log-Jacobian in unconstrained coordinates.
    pub gradient: DVector<f64>,
}

/// Smoothing weights of the particles at time `s`, taken from the genealogy of
/// the particles at time `k >= s`. `idx` and `out` are scratch of length `N`.
fn lagged_weights(system: &ParticleSystem, s: usize, k: usize, idx: &mut [u32], out: &mut [f64]) {
    for (i, v) in idx.iter_mut().enumerate() {
        *v = i as u32;
    }
    for tau in (s + 1..=k).rev() {
        let anc = system.ancestors_at(tau);
        for v in idx.iter_mut() {
            *v = anc[*v as usize];
        }
    }
    out.iter_mut().for_each(|w| *w = 0.0);
    for (w, &j) in system.weights_at(k).iter().zip(idx.iter()) {
        out[j as usize] += w;
    }
}

/// Natural-coordinate score of `log p(y_{1:T})` from a fixed-lag smoother.
///
/// The complete-data term at time `s` (a function of `x_{s-1}, x_s`) is
/// averaged over the time-`min(s + lag, T)` particles traced back to `s`, so
/// the last `lag` terms all share the time-`T` genealogy.
pub fn fixed_lag_natural_score<M: StateSpaceModel>(
    model: &M,
    theta: &[f64],
    y: &[f64],
    system: &ParticleSystem,
    lag: usize,
) -> Result<Vec<f64>, SmcError> {
    if lag == 0 {
        return Err(SmcError::InvalidLag);
    }
    let p = model.prepare(theta)?;
    let n = system.particles();
    let steps = system.steps();
    let mut acc = vec![0.0; model.dim()];
    let mut idx = vec![0u32; n];
    let mut w = vec![0.0; n];
    for s in 0..=steps {
        lagged_weights(system, s, (s + lag).min(steps), &mut idx, &mut w);
        let xs = system.states_at(s);
        if s == 0 {
            for (j, &wj) in w.iter().enumerate() {
                if wj > 0.0 {
                    model.initial_score(&p, xs[j], wj, &mut acc);
                }
            }
            continue;
        }
        let parents = system.ancestors_at(s);
        let xp = system.states_at(s - 1);
        let y_prev = if s >= 2 { Some(y[s - 2]) } else { None };
        for (j, &wj) in w.iter().enumerate() {
            if wj > 0.0 {
                model.transition_score(&p, xp[parents[j] as usize], xs[j], y_prev, wj, &mut acc);
                model.observation_score(&p, xs[j], y[s - 1], wj, &mut acc);
            }
        }
    }
    Ok(acc)
}

/// Natural-coordinate score from the full time-`T` genealogy (path-space smoother).
pub fn genealogy_natural_score<M: StateSpaceModel>(
    model: &M,
    theta: &[f64],
    y: &[f64],
    system: &ParticleSystem,
) -> Result<Vec<f64>, SmcError> {
    let p = model.prepare(theta)?;
    let steps = system.steps();
    let mut acc = vec![0.0; model.dim()];
    for (i, &wi) in system.weights_at(steps).iter().enumerate() {
        let mut j = i;
        for t in (1..=steps).rev() {
            let parent = system.ancestors_at(t)[j] as usize;
            let y_prev = if t >= 2 { Some(y[t - 2]) } else { None };
            let x_t = system.states_at(t)[j];
            model.transition_score(&p, system.states_at(t - 1)[parent], x_t, y_prev, wi, &mut acc);
            model.observation_score(&p, x_t, y[t - 1], wi, &mut acc);
            j = parent;
        }
        model.initial_score(&p, system.states_at(0)[j], wi, &mut acc);
    }
    Ok(acc)
}

/// Fixed-lag smoothed mean and variance of every `x_t`, `t = 0..=T`.
pub fn fixed_lag_state_moments(system: &ParticleSystem, lag: usize) -> Result<Vec<Moments>, SmcError> {
    if lag == 0 {
        return Err(SmcError::InvalidLag);
    }
    let n = system.particles();
    let steps = system.steps();
    let mut idx = vec![0u32; n];
    let mut w = vec![0.0; n];
    Ok((0..=steps)
        .map(|s| {
            lagged_weights(system, s, (s + lag).min(steps), &mut idx, &mut w);
            let xs = system.states_at(s);
            let mean: f64 = w.iter().zip(xs).map(|(w, x)| w * x).sum();
            let var: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mean) * (x - mean)).sum();
            Moments { mean, var }
        })
        .collect())
}

/// Run the filter at `theta_bar` and return the log-likelihood estimate with the
/// fixed-lag gradient of the full log-target in unconstrained coordinates.
pub fn fixed_lag_score<M: StateSpaceModel>(
    model: &M,
    theta_bar: &ParameterVector,
    data: &DataSet,
    particles: usize,
    lag: usize,
    seed: u64,
) -> Result<ParticleScore, SmcError> {
    fixed_lag_score_with_rng(model, theta_bar, data, particles, lag, &mut crate::rng::stream_rng(seed, 0))
}

pub(crate) fn fixed_lag_score_with_rng<M: StateSpaceModel>(
    model: &M,
    theta_bar: &ParameterVector,
    data: &DataSet,
    particles: usize,
    lag: usize,
    rng: &mut StreamRng,
) -> Result<ParticleScore, SmcError> {
    theta_bar.expect_space(Space::Unconstrained)?;
    if lag == 0 {
        return Err(SmcError::InvalidLag);
    }
    let u = theta_bar.values();
    let theta = natural_values(model.transforms(), u);
    let y = data.observations();
    let system = bootstrap_pf_with_rng(model, theta.as_slice(), y, particles, rng)?;
    let g = fixed_lag_natural_score(model, theta.as_slice(), y, &system, lag)?;
    Ok(ParticleScore {
        log_likelihood: system.log_likelihood(),
        gradient: chain_rule(model.transforms(), u, &g)
            + grad_log_prior_unconstrained(model.transforms(), model.priors(), u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, Lgss, SvLeverage};
    use crate::smc::bootstrap_pf;

    #[test]
    fn full_lag_equals_genealogy_score() {
        let model = Lgss::default();
        let theta = [0.2, 0.5, 1.0];
        let data = simulate(&model, &theta, 60, 3).unwrap();
        let y = data.observations();
        let sys = bootstrap_pf(&model, &theta, y, 200, 5).unwrap();
        let a = fixed_lag_natural_score(&model, &theta, y, &sys, 60).unwrap();
        let b = genealogy_natural_score(&model, &theta, y, &sys).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() <= 1e-10 * z.abs().max(1.0), "{x} vs {z}");
        }
        // lags beyond T behave like T
        let c = fixed_lag_natural_score(&model, &theta, y, &sys, 500).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn full_lag_equals_genealogy_score_for_sv() {
        let model = SvLeverage::default();
        let theta = [1.0, 0.9, 0.5, -0.02];
        let data = simulate(&model, &theta, 40, 8).unwrap();
        let y = data.observations();
        let sys = bootstrap_pf(&model, &theta, y, 150, 1).unwrap();
        let a = fixed_lag_natural_score(&model, &theta, y, &sys, 40).unwrap();
        let b = genealogy_natural_score(&model, &theta, y, &sys).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() <= 1e-10 * z.abs().max(1.0), "{x} vs {z}");
        }
    }

    #[test]
    fn zero_lag_is_rejected() {
        let model = Lgss::default();
        let sys = bootstrap_pf(&model, &[0.0, 0.5, 1.0], &[0.1, 0.2], 10, 0).unwrap();
        assert_eq!(
            fixed_lag_natural_score(&model, &[0.0, 0.5, 1.0], &[0.1, 0.2], &sys, 0).unwrap_err(),
            SmcError::InvalidLag
        );
    }

    #[test]
    fn mean_over_seeds_matches_kalman_score() {
        let model = Lgss::default();
        let theta = [0.2, 0.5, 1.0];
        let data = simulate(&model, &theta, 50, 11).unwrap();
        let theta_bar =
            crate::models::to_unconstrained(model.transforms(), &ParameterVector::natural(&theta)).unwrap();
        let exact = crate::kalman::score_kalman(&model, &theta_bar, &data).unwrap();
        let seeds = 200;
        let draws: Vec<DVector<f64>> = (0..seeds)
            .map(|s| fixed_lag_score(&model, &theta_bar, &data, 500, 10, s).unwrap().gradient)
            .collect();
        for d in 0..3 {
            let mean = draws.iter().map(|g| g[d]).sum::<f64>() / seeds as f64;
            let var = draws.iter().map(|g| (g[d] - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
            let se = (var / seeds as f64).sqrt();
            assert!(
                (mean - exact[d]).abs() < 3.0 * se,
                "coordinate {d}: mean {mean}, se {se}, exact {}",
                exact[d]
            );
        }
    }

    #[test]
    fn prior_and_jacobian_terms_are_added_exactly() {
        let model = SvLeverage::default();
        let theta = [1.0, 0.9, 0.5, 0.0];
        let data = simulate(&model, &theta, 30, 6).unwrap();
        let u = crate::models::to_unconstrained(model.transforms(), &ParameterVector::natural(&theta)).unwrap();
        let exact = grad_log_prior_unconstrained(model.transforms(), model.priors(), u.values());
        for particles in [5, 400] {
            let est = fixed_lag_score(&model, &u, &data, particles, 10, 9).unwrap();
            let sys = bootstrap_pf(&model, &theta, data.observations(), particles, 9).unwrap();
            let natural = fixed_lag_natural_score(&model, &theta, data.observations(), &sys, 10).unwrap();
            let rest = est.gradient - chain_rule(model.transforms(), u.values(), &natural);
            assert!((rest - &exact).amax() < 1e-12);
        }
    }

    #[test]
    fn state_moments_are_finite_and_positive() {
        let model = SvLeverage::default();
        let theta = [0.5, 0.9, 0.3, 0.0];
        let data = simulate(&model, &theta, 50, 2).unwrap();
        let sys = bootstrap_pf(&model, &theta, data.observations(), 200, 7).unwrap();
        let m = fixed_lag_state_moments(&sys, 10).unwrap();
        assert_eq!(m.len(), 51);
        assert!(m.iter().all(|m| m.mean.is_finite() && m.var >= 0.0));
    }
}
