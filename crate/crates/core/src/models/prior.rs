use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Prior distribution for a single natural-coordinate parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Gaussian { mean: f64, sd: f64 },
    /// Gaussian restricted to the open interval `(lower, upper)` and renormalized.
    TruncatedGaussian { mean: f64, sd: f64, lower: f64, upper: f64 },
    /// Shape-rate parametrization; mean is `shape / rate`.
    Gamma { shape: f64, rate: f64 },
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Prior {
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
            Prior::TruncatedGaussian { mean, sd, lower, upper } => {
                if x <= lower || x >= upper {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mean) / sd;
                let mass = std_normal_cdf((upper - mean) / sd) - std_normal_cdf((lower - mean) / sd);
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z - mass.ln()
            }
            Prior::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
        }
    }

    /// d/dx of the log density; zero outside the support.
    pub fn grad_log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Gaussian { mean, sd } => -(x - mean) / (sd * sd),
            Prior::TruncatedGaussian { mean, sd, lower, upper } => {
                if x <= lower || x >= upper {
                    0.0
                } else {
                    -(x - mean) / (sd * sd)
                }
            }
            Prior::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    (shape - 1.0) / x - rate
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::Gaussian { mean, .. } => mean,
            Prior::TruncatedGaussian { mean, sd, lower, upper } => {
                let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
                let pdf = |z: f64| (-0.5 * z * z - LN_SQRT_2PI).exp();
                let mass = std_normal_cdf(b) - std_normal_cdf(a);
                mean + sd * (pdf(a) - pdf(b)) / mass
            }
            Prior::Gamma { shape, rate } => shape / rate,
        }
    }
}

/// Sum of independent per-coordinate prior log densities.
pub fn log_prior(priors: &[Prior], theta: &[f64]) -> f64 {
    priors
        .iter()
        .zip(theta)
        .map(|(p, &x)| p.log_density(x))
        .sum()
}
