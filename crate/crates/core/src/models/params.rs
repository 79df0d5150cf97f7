use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Coordinate system a parameter vector is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Natural,
    Unconstrained,
}

/// Bijection between an unconstrained real coordinate and a natural parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// Real line to real line.
    Identity,
    /// Real line to (-1, 1).
    Tanh,
    /// Real line to (0, inf).
    Exp,
}

impl Transform {
    pub fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Tanh => u.tanh(),
            Transform::Exp => u.exp(),
        }
    }

    /// Inverse map. `None` when `v` is outside the open support.
    pub fn to_unconstrained(self, v: f64) -> Option<f64> {
        match self {
            Transform::Identity => v.is_finite().then_some(v),
            Transform::Tanh => (v > -1.0 && v < 1.0).then(|| v.atanh()),
            Transform::Exp => (v > 0.0 && v.is_finite()).then(|| v.ln()),
        }
    }

    pub fn in_support(self, v: f64) -> bool {
        match self {
            Transform::Identity => v.is_finite(),
            Transform::Tanh => v > -1.0 && v < 1.0,
            Transform::Exp => v > 0.0 && v.is_finite(),
        }
    }

    /// d(natural)/d(unconstrained) evaluated at `u`.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Transform::Exp => u.exp(),
        }
    }

    /// log |d(natural)/d(unconstrained)|.
    pub fn log_abs_derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            // log(1 - tanh^2 u) = -2 log cosh u, written to stay finite for large |u|
            Transform::Tanh => {
                let a = u.abs();
                -2.0 * (a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
            }
            Transform::Exp => u,
        }
    }

    /// Derivative of `log_abs_derivative` with respect to `u`.
    pub fn grad_log_abs_derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Tanh => -2.0 * u.tanh(),
            Transform::Exp => 1.0,
        }
    }
}

/// Model parameters tagged with the coordinate system they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: DVector<f64>,
    space: Space,
}

impl ParameterVector {
    pub fn new(values: DVector<f64>, space: Space) -> Self {
        Self { values, space }
    }

    pub fn natural(values: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(values), Space::Natural)
    }

    pub fn unconstrained(values: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(values), Space::Unconstrained)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn expect_space(&self, space: Space) -> Result<(), ModelError> {
        if self.space == space {
            Ok(())
        } else {
            Err(ModelError::WrongSpace {
                expected: space,
                found: self.space,
            })
        }
    }
}

/// Map natural values to unconstrained coordinates coordinate-wise.
pub fn to_unconstrained(
    transforms: &[Transform],
    theta: &ParameterVector,
) -> Result<ParameterVector, ModelError> {
    theta.expect_space(Space::Natural)?;
    check_dim(transforms.len(), theta.len())?;
    let mut out = DVector::zeros(theta.len());
    for (i, (t, &v)) in transforms.iter().zip(theta.as_slice()).enumerate() {
        out[i] = t
            .to_unconstrained(v)
            .ok_or(ModelError::OutOfSupport { index: i, value: v })?;
    }
    Ok(ParameterVector::new(out, Space::Unconstrained))
}

pub fn to_natural(
    transforms: &[Transform],
    theta_bar: &ParameterVector,
) -> Result<ParameterVector, ModelError> {
    theta_bar.expect_space(Space::Unconstrained)?;
    check_dim(transforms.len(), theta_bar.len())?;
    Ok(ParameterVector::new(
        natural_values(transforms, theta_bar.values()),
        Space::Natural,
    ))
}

pub(crate) fn natural_values(transforms: &[Transform], u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        transforms.iter().zip(u.iter()).map(|(t, &x)| t.to_natural(x)),
    )
}

/// log |det d(theta)/d(theta_bar)| for a diagonal transform.
pub fn log_jacobian(transforms: &[Transform], theta_bar: &ParameterVector) -> Result<f64, ModelError> {
    theta_bar.expect_space(Space::Unconstrained)?;
    check_dim(transforms.len(), theta_bar.len())?;
    Ok(transforms
        .iter()
        .zip(theta_bar.as_slice())
        .map(|(t, &u)| t.log_abs_derivative(u))
        .sum())
}

fn check_dim(expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Dimension { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LGSS: [Transform; 3] = [Transform::Identity, Transform::Tanh, Transform::Exp];

    #[test]
    fn zero_maps_to_identity_points() {
        assert_eq!(Transform::Tanh.to_natural(0.0), 0.0);
        assert_eq!(Transform::Exp.to_natural(0.0), 1.0);
        assert_eq!(Transform::Tanh.log_abs_derivative(0.0), 0.0);
        assert_eq!(Transform::Exp.log_abs_derivative(0.0), 0.0);
        assert_eq!(Transform::Exp.log_abs_derivative(1.0), 1.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let theta = ParameterVector::natural(&[0.3, 0.7, 0.5]);
        let back = to_natural(&LGSS, &to_unconstrained(&LGSS, &theta).unwrap()).unwrap();
        for (a, b) in theta.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_space_is_rejected() {
        let theta = ParameterVector::natural(&[0.3, 0.7, 0.5]);
        assert!(matches!(
            to_natural(&LGSS, &theta),
            Err(ModelError::WrongSpace { .. })
        ));
        assert!(matches!(
            log_jacobian(&LGSS, &theta),
            Err(ModelError::WrongSpace { .. })
        ));
    }

    #[test]
    fn out_of_support_is_rejected() {
        let theta = ParameterVector::natural(&[0.0, 1.5, 1.0]);
        assert!(matches!(
            to_unconstrained(&LGSS, &theta),
            Err(ModelError::OutOfSupport { index: 1, .. })
        ));
        let theta = ParameterVector::natural(&[0.0, 0.5, -1.0]);
        assert!(to_unconstrained(&LGSS, &theta).is_err());
    }

    #[test]
    fn stable_tanh_jacobian_matches_naive_form() {
        for &u in &[-3.0, -0.4, 0.0, 0.2, 1.7, 5.0] {
            let t: f64 = f64::tanh(u);
            let naive = (1.0 - t * t).ln();
            assert!((Transform::Tanh.log_abs_derivative(u) - naive).abs() < 1e-10);
        }
        assert!(Transform::Tanh.log_abs_derivative(400.0).is_finite());
    }

    #[test]
    fn log_jacobian_matches_numerical_determinant() {
        let u = [0.4, -0.8, 0.3];
        let theta_bar = ParameterVector::unconstrained(&u);
        let h = 1e-6;
        let map = |x: &[f64]| -> Vec<f64> {
            LGSS.iter().zip(x).map(|(t, &v)| t.to_natural(v)).collect()
        };
        let mut jac = nalgebra::DMatrix::zeros(3, 3);
        for j in 0..3 {
            let mut up = u.to_vec();
            let mut down = u.to_vec();
            up[j] += h;
            down[j] -= h;
            let (fu, fd) = (map(&up), map(&down));
            for i in 0..3 {
                jac[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let numerical = jac.determinant().abs().ln();
        let exact = log_jacobian(&LGSS, &theta_bar).unwrap();
        assert!(((exact - numerical) / numerical).abs() < 1e-6);
    }
}
