//! Neo-Hookean stored energy `Ĉ(Y) = c (|Y|_F^2 - 3) + (c / β) (det(Y)^(-2β) - 1)`
//! with `c = μ / 2` and `β = (3ν - 2μ) / (6μ)`.
//!
//! `Y` is the deformation gradient `I + ∇u`. Linearized at `Y = I` this is
//! isotropic elasticity with shear modulus `μ` and bulk modulus `ν`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::ForwardError;

/// Reference constants (GPa).
pub const REFERENCE_NU_GPA: f64 = 68.6;
pub const REFERENCE_MU_GPA: f64 = 26.32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Shear modulus.
    pub mu: f64,
    /// Bulk modulus.
    pub nu: f64,
}

impl MaterialModel {
    pub fn new(mu: f64, nu: f64) -> Result<Self, ForwardError> {
        let m = Self { mu, nu };
        if !(m.c() > 0.0 && m.beta() > 0.0 && m.beta().is_finite()) {
            return Err(ForwardError::InvalidConfig(format!(
                "material constants mu = {mu}, nu = {nu} give c = {}, beta = {}; both must be positive",
                m.c(),
                m.beta()
            )));
        }
        Ok(m)
    }

    /// Constants in GPa.
    pub fn reference() -> Self {
        Self {
            mu: REFERENCE_MU_GPA,
            nu: REFERENCE_NU_GPA,
        }
    }

    pub fn c(&self) -> f64 {
        self.mu / 2.0
    }

    pub fn beta(&self) -> f64 {
        (3.0 * self.nu - 2.0 * self.mu) / (6.0 * self.mu)
    }

    /// Moduli divided by `μ`, so that `c = 1/2`. Returns the model and the
    /// stress scale `μ`.
    pub fn nondimensionalized(&self) -> (Self, f64) {
        (
            Self {
                mu: 1.0,
                nu: self.nu / self.mu,
            },
            self.mu,
        )
    }
}

fn checked_det(y: &Matrix3<f64>) -> Result<f64, ForwardError> {
    let det = y.determinant();
    if det > 0.0 && det.is_finite() {
        Ok(det)
    } else {
        Err(ForwardError::InvalidDeformation { cell: None, det })
    }
}

pub fn neo_hookean_energy(y: &Matrix3<f64>, m: &MaterialModel) -> Result<f64, ForwardError> {
    let det = checked_det(y)?;
    let (c, beta) = (m.c(), m.beta());
    Ok(c * (y.norm_squared() - 3.0) + c / beta * (det.powf(-2.0 * beta) - 1.0))
}

/// First Piola-Kirchhoff stress `∇_Y Ĉ(Y) = 2c Y - 2c det(Y)^(-2β) Y^(-T)`.
pub fn first_piola_reference(
    y: &Matrix3<f64>,
    m: &MaterialModel,
) -> Result<Matrix3<f64>, ForwardError> {
    let det = checked_det(y)?;
    let inv_t = y
        .try_inverse()
        .ok_or(ForwardError::InvalidDeformation { cell: None, det })?
        .transpose();
    let c = m.c();
    Ok(y * (2.0 * c) - inv_t * (2.0 * c * det.powf(-2.0 * m.beta())))
}

/// Fourth-order tangent `A[i][J][k][L] = ∂P_iJ / ∂Y_kL`, flattened as
/// `27 i + 9 J + 3 k + L`:
///
/// `2c δ_ik δ_JL + 2c det^(-2β) (2β G_iJ G_kL + G_iL G_kJ)`, `G = Y^(-T)`.
pub fn piola_tangent(y: &Matrix3<f64>, m: &MaterialModel) -> Result<[f64; 81], ForwardError> {
    let det = checked_det(y)?;
    let g = y
        .try_inverse()
        .ok_or(ForwardError::InvalidDeformation { cell: None, det })?
        .transpose();
    let c = m.c();
    let beta = m.beta();
    let s = 2.0 * c * det.powf(-2.0 * beta);
    let mut a = [0.0; 81];
    for i in 0..3 {
        for jj in 0..3 {
            for k in 0..3 {
                for ll in 0..3 {
                    let mut v = s * (2.0 * beta * g[(i, jj)] * g[(k, ll)] + g[(i, ll)] * g[(k, jj)]);
                    if i == k && jj == ll {
                        v += 2.0 * c;
                    }
                    a[27 * i + 9 * jj + 3 * k + ll] = v;
                }
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> MaterialModel {
        MaterialModel::reference().nondimensionalized().0
    }

    #[test]
    fn reference_constants() {
        let m = MaterialModel::reference();
        assert_relative_eq!(m.c(), 13.16, epsilon = 1e-12);
        assert!((m.beta() - 0.9699).abs() < 5e-5);
        let (nd, scale) = m.nondimensionalized();
        assert_eq!(scale, 26.32);
        assert_eq!(nd.c(), 0.5);
        assert_relative_eq!(nd.beta(), m.beta(), max_relative = 1e-14);
    }

    #[test]
    fn stress_free_reference() {
        let m = model();
        let id = Matrix3::identity();
        assert_eq!(neo_hookean_energy(&id, &m).unwrap(), 0.0);
        assert_eq!(first_piola_reference(&id, &m).unwrap(), Matrix3::zeros());
    }

    #[test]
    fn uniaxial_stretch() {
        let m = model();
        for s in [0.5, 0.9, 1.0, 1.3, 2.0] {
            let y = Matrix3::from_diagonal(&nalgebra::Vector3::new(s, 1.0, 1.0));
            let (c, b) = (m.c(), m.beta());
            let expected = c * (s * s - 1.0) + c / b * (s.powf(-2.0 * b) - 1.0);
            assert_relative_eq!(neo_hookean_energy(&y, &m).unwrap(), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn stress_scales_with_common_moduli_scaling() {
        let m = MaterialModel::new(1.3, 2.9).unwrap();
        let m2 = MaterialModel::new(2.6, 5.8).unwrap();
        let y = Matrix3::new(1.1, 0.05, -0.02, 0.0, 0.95, 0.1, 0.03, -0.04, 1.02);
        let p = first_piola_reference(&y, &m).unwrap();
        let p2 = first_piola_reference(&y, &m2).unwrap();
        assert_relative_eq!(p2, p * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn tangent_matches_central_differences() {
        let m = model();
        let y = Matrix3::new(1.05, 0.02, -0.03, 0.01, 0.97, 0.04, -0.02, 0.03, 1.01);
        let a = piola_tangent(&y, &m).unwrap();
        let eps = 1e-6;
        for k in 0..3 {
            for l in 0..3 {
                let mut yp = y;
                let mut ym = y;
                yp[(k, l)] += eps;
                ym[(k, l)] -= eps;
                let d = (first_piola_reference(&yp, &m).unwrap()
                    - first_piola_reference(&ym, &m).unwrap())
                    / (2.0 * eps);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((a[27 * i + 9 * j + 3 * k + l] - d[(i, j)]).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn inverted_deformation_rejected() {
        let m = model();
        let y = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(
            neo_hookean_energy(&y, &m),
            Err(ForwardError::InvalidDeformation { .. })
        ));
        assert!(first_piola_reference(&Matrix3::zeros(), &m).is_err());
    }

    #[test]
    fn nonpositive_constants_rejected() {
        assert!(MaterialModel::new(1.0, 0.5).is_err());
        assert!(MaterialModel::new(0.0, 1.0).is_err());
    }
}
