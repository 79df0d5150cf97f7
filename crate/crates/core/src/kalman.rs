//! Exact likelihood and score for the LGSS model.
//!
//! Scalar Kalman filter, RTS smoother with lag-one cross-covariances, and a
//! closed-form Fisher-identity score built from the smoothed moments.
//! Time indices run over `0..=T`; slot 0 holds the stationary initial
//! distribution, which has no observation.

use nalgebra::DVector;

use crate::models::{
    chain_rule, grad_log_prior_unconstrained, natural_values, DataSet, Lgss, ModelError, ParameterVector, Space,
    StateSpaceModel,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    /// `E[x_t | y_{1:t-1}]`, `t = 0..=T`.
    pub predicted_mean: Vec<f64>,
    pub predicted_var: Vec<f64>,
    /// `E[x_t | y_{1:t}]`, `t = 0..=T`.
    pub filtered_mean: Vec<f64>,
    pub filtered_var: Vec<f64>,
    /// `log p(y_t | y_{1:t-1})`, `t = 1..=T` stored at index `t - 1`.
    pub log_densities: Vec<f64>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult {
    /// `E[x_t | y_{1:T}]`, `t = 0..=T`.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// `Cov(x_t, x_{t-1} | y_{1:T})`, `t = 1..=T` stored at index `t - 1`.
    pub lag_one_cov: Vec<f64>,
}

pub fn kalman_filter(model: &Lgss, theta: &ParameterVector, data: &DataSet) -> Result<FilterResult, ModelError> {
    theta.expect_space(Space::Natural)?;
    filter(model, theta.as_slice(), data.observations())
}

pub(crate) fn filter(model: &Lgss, theta: &[f64], y: &[f64]) -> Result<FilterResult, ModelError> {
    let p = model.prepare(theta)?;
    let n = y.len();
    let mut out = FilterResult {
        predicted_mean: Vec::with_capacity(n + 1),
        predicted_var: Vec::with_capacity(n + 1),
        filtered_mean: Vec::with_capacity(n + 1),
        filtered_var: Vec::with_capacity(n + 1),
        log_densities: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let init = model.initial(&p);
    out.predicted_mean.push(init.mean);
    out.predicted_var.push(init.var);
    out.filtered_mean.push(init.mean);
    out.filtered_var.push(init.var);

    let (mut m, mut v) = (init.mean, init.var);
    for (t, &obs) in y.iter().enumerate() {
        if !obs.is_finite() {
            return Err(ModelError::InvalidData(format!("non-finite observation at t = {}", t + 1)));
        }
        let pred_m = p.mu + p.phi * (m - p.mu);
        let pred_v = p.phi * p.phi * v + p.var;
        let s = pred_v + p.obs_var;
        let innovation = obs - pred_m;
        let gain = pred_v / s;
        let ld = -0.5 * (LN_2PI + s.ln() + innovation * innovation / s);
        m = pred_m + gain * innovation;
        v = (1.0 - gain) * pred_v;
        out.predicted_mean.push(pred_m);
        out.predicted_var.push(pred_v);
        out.filtered_mean.push(m);
        out.filtered_var.push(v);
        out.log_densities.push(ld);
        out.log_likelihood += ld;
    }
    Ok(out)
}

/// Backward RTS recursion over `t = T-1..=0`.
pub fn rts_smoother(filter: &FilterResult, model: &Lgss, theta: &ParameterVector) -> Result<SmootherResult, ModelError> {
    theta.expect_space(Space::Natural)?;
    let p = model.prepare(theta.as_slice())?;
    Ok(smooth(filter, p.phi))
}

fn smooth(f: &FilterResult, phi: f64) -> SmootherResult {
    let len = f.filtered_mean.len();
    let mut mean = f.filtered_mean.clone();
    let mut var = f.filtered_var.clone();
    let mut lag_one_cov = vec![0.0; len - 1];
    for t in (0..len - 1).rev() {
        let gain = f.filtered_var[t] * phi / f.predicted_var[t + 1];
        mean[t] = f.filtered_mean[t] + gain * (mean[t + 1] - f.predicted_mean[t + 1]);
        var[t] = f.filtered_var[t] + gain * gain * (var[t + 1] - f.predicted_var[t + 1]);
        lag_one_cov[t] = gain * var[t + 1];
    }
    SmootherResult { mean, var, lag_one_cov }
}

/// Log-likelihood and its natural-coordinate gradient via Fisher's identity.
///
/// The complete-data log density is a sum of the stationary initial term and
/// AR(1) transition terms; each contributes a score that is quadratic in the
/// states, so its smoothed expectation only needs first and second moments.
pub(crate) fn loglik_and_score(model: &Lgss, theta: &[f64], y: &[f64]) -> Result<(f64, [f64; 3]), ModelError> {
    let f = filter(model, theta, y)?;
    let p = model.prepare(theta)?;
    let s = smooth(&f, p.phi);
    let (mu, phi, sigma) = (p.mu, p.phi, p.sigma);
    let s2 = p.var;

    // initial term
    let a0 = s.mean[0] - mu;
    let ea0 = a0;
    let ea0_sq = s.var[0] + a0 * a0;
    let one_m = 1.0 - phi * phi;
    let mut g = [
        one_m * ea0 / s2,
        -phi / one_m + phi * ea0_sq / s2,
        -1.0 / sigma + one_m * ea0_sq / (s2 * sigma),
    ];

    // transition terms: r_t = a_t - phi a_{t-1}, a_t = x_t - mu
    let mut sum_r = 0.0;
    let mut sum_r_aprev = 0.0;
    let mut sum_r2 = 0.0;
    for t in 1..s.mean.len() {
        let (m1, m0) = (s.mean[t] - mu, s.mean[t - 1] - mu);
        let e11 = s.var[t] + m1 * m1;
        let e00 = s.var[t - 1] + m0 * m0;
        let e10 = s.lag_one_cov[t - 1] + m1 * m0;
        sum_r += m1 - phi * m0;
        sum_r_aprev += e10 - phi * e00;
        sum_r2 += e11 - 2.0 * phi * e10 + phi * phi * e00;
    }
    let steps = (s.mean.len() - 1) as f64;
    g[0] += (1.0 - phi) * sum_r / s2;
    g[1] += sum_r_aprev / s2;
    g[2] += -steps / sigma + sum_r2 / (s2 * sigma);
    Ok((f.log_likelihood, g))
}

/// Gradient of the log-target (likelihood + prior + Jacobian) in unconstrained coordinates.
pub fn score_kalman(model: &Lgss, theta_bar: &ParameterVector, data: &DataSet) -> Result<DVector<f64>, ModelError> {
    theta_bar.expect_space(Space::Unconstrained)?;
    let u = theta_bar.values();
    let theta = natural_values(model.transforms(), u);
    let (_, g) = loglik_and_score(model, theta.as_slice(), data.observations())?;
    Ok(chain_rule(model.transforms(), u, &g) + grad_log_prior_unconstrained(model.transforms(), model.priors(), u))
}
