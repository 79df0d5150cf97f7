//! Multivariate normal densities and draws parameterized by either a
//! covariance or a precision matrix (both stored as Cholesky factors).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
enum Factor {
    /// `Sigma = L L^T`
    Covariance(Cholesky<f64, Dyn>),
    /// `Sigma^{-1} = L L^T`
    Precision(Cholesky<f64, Dyn>),
}

#[derive(Debug, Clone)]
pub struct Mvn {
    mean: DVector<f64>,
    factor: Factor,
    /// `log det Sigma`
    log_det_cov: f64,
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

impl Mvn {
    /// `None` when `cov` is not numerically positive definite.
    pub fn from_covariance(mean: DVector<f64>, cov: DMatrix<f64>) -> Option<Self> {
        let chol = Cholesky::new(cov)?;
        let log_det_cov = log_det(&chol);
        Some(Mvn { mean, factor: Factor::Covariance(chol), log_det_cov })
    }

    /// `None` when `precision` is not numerically positive definite.
    pub fn from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Option<Self> {
        let chol = Cholesky::new(precision)?;
        let log_det_cov = -log_det(&chol);
        Some(Mvn { mean, factor: Factor::Precision(chol), log_det_cov })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        self.mean.clone() + self.transform_noise(xi)
    }

    /// Maps a standard normal vector to a zero-mean draw with this covariance.
    pub fn transform_noise(&self, xi: DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Covariance(c) => c.l_dirty().lower_triangle() * xi,
            Factor::Precision(c) => {
                // Sigma = L^{-T} L^{-1}, so L^{-T} xi has covariance Sigma
                let lt = c.l_dirty().lower_triangle().transpose();
                lt.solve_upper_triangular(&xi).expect("Cholesky factor has a positive diagonal")
            }
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let quad = match &self.factor {
            Factor::Covariance(c) => {
                let w = c.l_dirty().lower_triangle().solve_lower_triangular(&d).expect("positive diagonal");
                w.norm_squared()
            }
            Factor::Precision(c) => (c.l_dirty().lower_triangle().transpose() * d).norm_squared(),
        };
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det_cov + quad)
    }

    /// `Sigma^{-1} v`
    pub fn precision_times(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Covariance(c) => c.solve(v),
            Factor::Precision(c) => {
                let l = c.l_dirty().lower_triangle();
                &l * (l.transpose() * v)
            }
        }
    }
}

/// Solve `A x = v` for SPD `A`; `None` when `A` is not positive definite.
pub(crate) fn spd_solve(a: &DMatrix<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    Cholesky::new(a.clone()).map(|c| c.solve(v))
}

pub(crate) fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(a.clone()).map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn reference_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let inv = cov.clone().try_inverse().unwrap();
        let d = x - mean;
        let quad = (d.transpose() * inv * &d)[(0, 0)];
        -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad)
    }

    fn random_spd(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn densities_match_dense_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = 1 + rng.random_range(0..4);
            let cov = random_spd(&mut rng, n);
            let mean = DVector::from_fn(n, |_, _| rng.random::<f64>());
            let x = DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0);
            let expected = reference_log_density(&x, &mean, &cov);
            let a = Mvn::from_covariance(mean.clone(), cov.clone()).unwrap();
            let b = Mvn::from_precision(mean.clone(), cov.clone().try_inverse().unwrap()).unwrap();
            assert!((a.log_density(&x) - expected).abs() < 1e-10);
            assert!((b.log_density(&x) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn draws_have_requested_covariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let mvn = Mvn::from_precision(DVector::zeros(2), cov.clone().try_inverse().unwrap()).unwrap();
        let n = 200_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = mvn.sample(&mut rng);
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).amax() < 0.03);
    }

    #[test]
    fn precision_product_roundtrip() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let a = Mvn::from_covariance(DVector::zeros(2), cov.clone()).unwrap();
        let b = Mvn::from_precision(DVector::zeros(2), cov.clone().try_inverse().unwrap()).unwrap();
        let expected = cov.try_inverse().unwrap() * &v;
        assert!((a.precision_times(&v) - &expected).amax() < 1e-12);
        assert!((b.precision_times(&v) - &expected).amax() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Mvn::from_covariance(DVector::zeros(2), m.clone()).is_none());
        assert!(Mvn::from_precision(DVector::zeros(2), m).is_none());
    }
}
