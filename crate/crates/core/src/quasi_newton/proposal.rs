use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::curvature::CurvatureEstimate;
use super::memory::MemoryEntry;
use crate::gaussian::{spd_solve, Mvn};

/// `N(theta + eps^2/2 B^{-1} G, eps^2 B^{-1})` anchored at a memory entry.
#[derive(Debug, Clone)]
pub struct QnProposal {
    mvn: Mvn,
    /// Cholesky of `B` failed and `B + delta I` (or `delta I`) was used instead.
    pub repaired: bool,
    /// The `delta I` fallback was used.
    pub fallback_identity: bool,
}

impl QnProposal {
    pub fn new(anchor: &MemoryEntry, curvature: &CurvatureEstimate, step_size: f64, delta: f64) -> Self {
        let n = anchor.theta.len();
        let eps2 = step_size * step_size;
        let build = |b: &DMatrix<f64>| {
            let drift = spd_solve(b, &anchor.gradient)?;
            Mvn::from_precision(&anchor.theta + drift * (0.5 * eps2), b / eps2)
        };
        if let Some(mvn) = build(&curvature.matrix) {
            return QnProposal { mvn, repaired: false, fallback_identity: curvature.fallback_identity };
        }
        let jittered = &curvature.matrix + DMatrix::identity(n, n) * delta;
        if let Some(mvn) = build(&jittered) {
            return QnProposal { mvn, repaired: true, fallback_identity: curvature.fallback_identity };
        }
        let mvn = build(&(DMatrix::identity(n, n) * delta)).expect("delta I is positive definite");
        QnProposal { mvn, repaired: true, fallback_identity: true }
    }

    pub fn mean(&self) -> &DVector<f64> {
        self.mvn.mean()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.mvn.sample(rng)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.mvn.log_density(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn estimate(matrix: DMatrix<f64>) -> CurvatureEstimate {
        CurvatureEstimate {
            matrix,
            damped_used: false,
            corrected: None,
            fallback_identity: false,
            jittered: false,
            min_eigenvalue: f64::NAN,
        }
    }

    fn anchor(theta: &[f64], gradient: &[f64]) -> MemoryEntry {
        MemoryEntry {
            theta: DVector::from_row_slice(theta),
            gradient: DVector::from_row_slice(gradient),
            log_target: 0.0,
            iteration: 0,
        }
    }

    #[test]
    fn zero_gradient_centres_on_anchor() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let q = QnProposal::new(&anchor(&[0.4, -1.0], &[0.0, 0.0]), &estimate(b), 0.5, 1.0);
        assert_eq!(q.mean(), &DVector::from_vec(vec![0.4, -1.0]));
    }

    #[test]
    fn density_matches_dense_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.2, 1.0, 3.0, -0.5, 0.2, -0.5, 2.0]);
        let a = anchor(&[0.1, 0.2, 0.3], &[1.0, -2.0, 0.5]);
        let eps = 0.7;
        let q = QnProposal::new(&a, &estimate(b.clone()), eps, 1.0);
        let binv = b.clone().try_inverse().unwrap();
        let mean = &a.theta + &binv * &a.gradient * (eps * eps / 2.0);
        let cov = &binv * (eps * eps);
        let cov_inv = cov.clone().try_inverse().unwrap();
        for _ in 0..100 {
            let x = q.sample(&mut rng);
            let d = &x - &mean;
            let expected = -0.5
                * (3.0 * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + (d.transpose() * &cov_inv * &d)[(0, 0)]);
            assert!((q.log_density(&x) - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_is_repaired() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        let q = QnProposal::new(&anchor(&[0.0, 0.0], &[1.0, 1.0]), &estimate(b), 1.0, 1.0);
        assert!(q.repaired && !q.fallback_identity);
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -5.0]));
        let q = QnProposal::new(&anchor(&[0.0, 0.0], &[1.0, 1.0]), &estimate(b), 1.0, 2.0);
        assert!(q.repaired && q.fallback_identity);
        // delta I fallback: covariance eps^2 / delta
        assert!((q.mean() - DVector::from_vec(vec![0.25, 0.25])).amax() < 1e-15);
    }
}
