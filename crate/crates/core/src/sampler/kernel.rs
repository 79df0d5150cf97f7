use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log u <= min(0, (log pi' - log pi) + (log q_rev - log q_fwd))`.
///
/// A zero-density candidate is always rejected; a zero-density current state
/// is left for any candidate with positive density.
pub fn mh_accept(log_pi_new: f64, log_pi_old: f64, log_q_rev: f64, log_q_fwd: f64, u: f64) -> bool {
    if log_pi_new.is_nan() || log_pi_new == f64::NEG_INFINITY {
        return false;
    }
    if log_pi_old == f64::NEG_INFINITY {
        return true;
    }
    let log_alpha = ((log_pi_new - log_pi_old) + (log_q_rev - log_q_fwd)).min(0.0);
    !log_alpha.is_nan() && u.ln() <= log_alpha
}

/// Preconditioned Gaussian kernel `N(theta + eps^2/2 P G, eps^2 P)`; with no
/// gradient it is the symmetric random walk `N(theta, eps^2 P)`.
#[derive(Debug, Clone)]
pub struct PmhKernel {
    preconditioner: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    step_size: f64,
    log_norm: f64,
}

impl PmhKernel {
    pub fn new(preconditioner: DMatrix<f64>, step_size: f64) -> Option<Self> {
        let chol = Cholesky::new(preconditioner.clone())?;
        let n = preconditioner.nrows() as f64;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (n * LN_2PI + log_det) - n * step_size.ln();
        Some(PmhKernel { preconditioner, chol, step_size, log_norm })
    }

    pub fn mean(&self, theta: &DVector<f64>, gradient: Option<&DVector<f64>>) -> DVector<f64> {
        match gradient {
            Some(g) => theta + &self.preconditioner * g * (0.5 * self.step_size * self.step_size),
            None => theta.clone(),
        }
    }

    pub fn propose<R: Rng + ?Sized>(
        &self,
        theta: &DVector<f64>,
        gradient: Option<&DVector<f64>>,
        rng: &mut R,
    ) -> DVector<f64> {
        let n = theta.len();
        let xi = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        self.mean(theta, gradient) + self.chol.l_dirty().lower_triangle() * xi * self.step_size
    }

    /// `log q(to | from)` with the gradient evaluated at `from`.
    pub fn log_density(&self, to: &DVector<f64>, from: &DVector<f64>, gradient_at_from: Option<&DVector<f64>>) -> f64 {
        let d = (to - self.mean(from, gradient_at_from)) / self.step_size;
        let w = self.chol.l_dirty().lower_triangle().solve_lower_triangular(&d).expect("positive diagonal");
        self.log_norm - 0.5 * w.norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn accept_rules() {
        for u in [0.0, 0.5, 0.999_999] {
            assert!(mh_accept(-1.0, -1.0, 0.0, 0.0, u));
            assert!(!mh_accept(f64::NEG_INFINITY, -1.0, 0.0, 0.0, u));
            assert!(mh_accept(-5.0, f64::NEG_INFINITY, 0.0, 0.0, u));
        }
    }

    #[test]
    fn scalar_gaussian_ratio() {
        // pi = N(0, 1), move 0.5 -> 1.5: alpha = exp(-(1.5^2 - 0.5^2) / 2) = exp(-1)
        let lp = |x: f64| -0.5 * x * x;
        let alpha = (-1.0f64).exp();
        assert!((lp(1.5) - lp(0.5) - alpha.ln()).abs() < 1e-12);
        assert!(mh_accept(lp(1.5), lp(0.5), 0.0, 0.0, alpha * (1.0 - 1e-12)));
        assert!(!mh_accept(lp(1.5), lp(0.5), 0.0, 0.0, alpha * (1.0 + 1e-12)));
    }

    fn reference(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let inv = cov.clone().try_inverse().unwrap();
        let d = x - mean;
        -0.5 * (x.len() as f64 * LN_2PI + cov.determinant().ln() + (d.transpose() * inv * &d)[(0, 0)])
    }

    #[test]
    fn densities_match_reference() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]);
        let k = PmhKernel::new(p.clone(), 0.8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let theta = DVector::from_vec(vec![0.3, -0.1]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        for _ in 0..100 {
            let x = k.propose(&theta, Some(&g), &mut rng);
            let mean = &theta + &p * &g * 0.32;
            assert!((k.log_density(&x, &theta, Some(&g)) - reference(&x, &mean, &(&p * 0.64))).abs() < 1e-10);
            // pMH0 symmetry
            assert!((k.log_density(&x, &theta, None) - k.log_density(&theta, &x, None)).abs() < 1e-12);
            // zero gradient at both ends reduces to pMH0
            let z = DVector::zeros(2);
            assert!((k.log_density(&x, &theta, Some(&z)) - k.log_density(&x, &theta, None)).abs() < 1e-14);
        }
    }
}
