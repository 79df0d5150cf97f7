use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::memory::{extract_sorted_unique, GradientMemory};
use super::QnError;

/// Eigenvalue repair for an indefinite curvature estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    Flip,
    Reg,
    Hyb,
}

impl std::fmt::Display for Correction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Correction::Flip => "flip",
            Correction::Reg => "reg",
            Correction::Hyb => "hyb",
        })
    }
}

/// How curvature pairs that violate `s^T z > 0` are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "update", content = "correction", rename_all = "lowercase")]
pub enum Strategy {
    /// Damped updates; always positive definite.
    Dbfgs,
    /// Raw updates on every pair, then correction if indefinite.
    Ibfgs(Correction),
    /// Raw updates only on pairs with `s^T z > 0`, then correction if needed.
    Ebfgs(Correction),
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Dbfgs => f.write_str("dbfgs"),
            Strategy::Ibfgs(c) => write!(f, "ibfgs-{c}"),
            Strategy::Ebfgs(c) => write!(f, "ebfgs-{c}"),
        }
    }
}

/// Approximate negative Hessian of the log-target.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEstimate {
    pub matrix: DMatrix<f64>,
    /// Some damped update had `beta < 1`.
    pub damped_used: bool,
    pub corrected: Option<Correction>,
    /// No usable pairs: `matrix = delta I`.
    pub fallback_identity: bool,
    /// A `delta I` jitter was added to repair a zero eigenvalue.
    pub jittered: bool,
    pub min_eigenvalue: f64,
}

fn min_eigenvalue(b: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(b.clone()).eigenvalues.min()
}

fn numerically_spd(b: &DMatrix<f64>) -> bool {
    if !b.iter().all(|v| v.is_finite()) {
        return false;
    }
    let ev = SymmetricEigen::new(b.clone()).eigenvalues;
    ev.min() > 1e-12 * ev.amax()
}

fn symmetrize(b: DMatrix<f64>) -> DMatrix<f64> {
    (&b + b.transpose()) * 0.5
}

/// Standard BFGS update of a Hessian approximation,
/// `B' = B - B s s^T B / (s^T B s) + z z^T / (s^T z)`, so that `B' s = z`.
///
/// Returns `None` (skip) when `|s^T z| < 1e-12 |s| |z|` or `s^T B s`
/// vanishes.
pub fn bfgs_update(b: &DMatrix<f64>, s: &DVector<f64>, z: &DVector<f64>) -> Option<DMatrix<f64>> {
    let sz = s.dot(z);
    if !(sz.abs() >= 1e-12 * s.norm() * z.norm()) || sz == 0.0 {
        return None;
    }
    let bs = b * s;
    let sbs = s.dot(&bs);
    if !(sbs.abs() >= 1e-12 * s.norm() * bs.norm()) || sbs == 0.0 {
        return None;
    }
    let out = b - &bs * bs.transpose() / sbs + z * z.transpose() / sz;
    Some(symmetrize(out))
}

/// Damped BFGS update: `z` is replaced by `r = beta z + (1 - beta) B s` with
/// `beta < 1` only when `s^T z < 0.2 s^T B s`, so that `s^T r >= 0.2 s^T B s`.
/// Returns the update and whether damping was active; `None` when `s = 0`.
pub fn damped_bfgs_update(b: &DMatrix<f64>, s: &DVector<f64>, z: &DVector<f64>) -> Option<(DMatrix<f64>, bool)> {
    if s.iter().all(|v| *v == 0.0) {
        return None;
    }
    let bs = b * s;
    let sbs = s.dot(&bs);
    let sz = s.dot(z);
    if sz >= 0.2 * sbs {
        return bfgs_update(b, s, z).map(|m| (m, false));
    }
    let beta = 0.8 * sbs / (sbs - sz);
    let r = z * beta + &bs * (1.0 - beta);
    let sr = s.dot(&r);
    let out = b - &bs * bs.transpose() / sbs + &r * r.transpose() / sr;
    Some((symmetrize(out), true))
}

/// Makes a symmetric matrix positive definite.
///
/// * `Flip`: `Q |Lambda| Q^T`.
/// * `Reg`: `B - 2 lambda_min I` when `lambda_min < 0`.
/// * `Hyb`: `Sigma_emp^{-1}` (requires `empirical_precision`).
///
/// Zero eigenvalues left after `Flip` or `Reg` are repaired by adding `delta I`;
/// the second return value reports that jitter.
pub fn correct_curvature(
    b: &DMatrix<f64>,
    method: Correction,
    empirical_precision: Option<&DMatrix<f64>>,
    delta: f64,
) -> Result<(DMatrix<f64>, bool), QnError> {
    let eig = SymmetricEigen::new(b.clone());
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let tiny = 1e-12 * scale;
    let repaired = match method {
        Correction::Hyb => {
            return empirical_precision.map(|p| (p.clone(), false)).ok_or(QnError::MissingEmpiricalCovariance)
        }
        Correction::Flip => {
            let abs = eig.eigenvalues.map(f64::abs);
            &eig.eigenvectors * DMatrix::from_diagonal(&abs) * eig.eigenvectors.transpose()
        }
        Correction::Reg => {
            let lmin = eig.eigenvalues.min();
            if lmin < 0.0 {
                b - DMatrix::identity(b.nrows(), b.ncols()) * (2.0 * lmin)
            } else {
                b.clone()
            }
        }
    };
    let repaired = symmetrize(repaired);
    if min_eigenvalue(&repaired) <= tiny {
        let n = b.nrows();
        Ok((repaired + DMatrix::identity(n, n) * delta, true))
    } else {
        Ok((repaired, false))
    }
}

/// Builds the curvature estimate from the memory.
///
/// Pairs come from consecutive entries of [`extract_sorted_unique`]:
/// `s = theta_l - theta_{l-1}` and `z = -(G_l - G_{l-1})`, starting from
/// `B_0 = delta I`. With fewer than two distinct points the result is `delta I`.
/// Damped updates whose result is not numerically positive definite
/// (eigenvalue ratio below `1e-12`) are skipped.
/// A `Hyb` correction requested before `empirical_precision` exists falls back
/// to `Flip`.
pub fn build_curvature(
    memory: &GradientMemory,
    strategy: Strategy,
    delta: f64,
    empirical_precision: Option<&DMatrix<f64>>,
) -> CurvatureEstimate {
    let unique = extract_sorted_unique(memory);
    let dim = memory.oldest().map_or(0, |e| e.theta.len());
    let identity = DMatrix::identity(dim, dim) * delta;
    if unique.len() < 2 {
        return CurvatureEstimate {
            matrix: identity,
            damped_used: false,
            corrected: None,
            fallback_identity: true,
            jittered: false,
            min_eigenvalue: delta,
        };
    }
    let mut b = identity;
    let mut damped_used = false;
    for w in unique.windows(2) {
        let s = &w[1].theta - &w[0].theta;
        let z = &w[0].gradient - &w[1].gradient;
        match strategy {
            Strategy::Dbfgs => {
                if let Some((next, damped)) = damped_bfgs_update(&b, &s, &z) {
                    // exact arithmetic keeps `next` SPD; rounding can still leave
                    // a near-singular matrix after very ill-conditioned pairs
                    if numerically_spd(&next) {
                        b = next;
                        damped_used |= damped;
                    }
                }
            }
            Strategy::Ibfgs(_) => {
                if let Some(next) = bfgs_update(&b, &s, &z) {
                    b = next;
                }
            }
            Strategy::Ebfgs(_) => {
                if s.dot(&z) > 0.0 {
                    if let Some(next) = bfgs_update(&b, &s, &z) {
                        b = next;
                    }
                }
            }
        }
    }
    let lmin = if b.iter().all(|v| v.is_finite()) { min_eigenvalue(&b) } else { f64::NAN };
    let mut estimate = CurvatureEstimate {
        matrix: b,
        damped_used,
        corrected: None,
        fallback_identity: false,
        jittered: false,
        min_eigenvalue: lmin,
    };
    let correction = match strategy {
        Strategy::Dbfgs => None,
        Strategy::Ibfgs(c) | Strategy::Ebfgs(c) => Some(c),
    };
    if let Some(c) = correction {
        if lmin.is_nan() {
            estimate.matrix = DMatrix::identity(dim, dim) * delta;
            estimate.fallback_identity = true;
            estimate.min_eigenvalue = delta;
        } else if lmin <= 0.0 {
            let c = if c == Correction::Hyb && empirical_precision.is_none() { Correction::Flip } else { c };
            let (m, jittered) = correct_curvature(&estimate.matrix, c, empirical_precision, delta)
                .expect("hyb is only requested with an empirical precision");
            estimate.min_eigenvalue = min_eigenvalue(&m);
            estimate.matrix = m;
            estimate.corrected = Some(c);
            estimate.jittered = jittered;
        }
    }
    estimate
}
