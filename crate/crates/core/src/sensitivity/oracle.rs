//! Derivative-free reference computations for checking the sensitivities.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{JacobianMatrix, SensitivityError};
use crate::solvers::ForwardOperator;

fn failure(what: &str, e: impl std::fmt::Display) -> SensitivityError {
    SensitivityError::EstimationFailed(format!("{what}: {e}"))
}

/// Central-difference Jacobian `(F(α + ε e_K) - F(α - ε e_K)) / 2ε`.
pub fn fd_jacobian_oracle<F: ForwardOperator + ?Sized>(
    op: &F,
    alpha: &DVector<f64>,
    epsilon: f64,
) -> Result<JacobianMatrix, SensitivityError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SensitivityError::EstimationFailed(format!("epsilon {epsilon} must be positive")));
    }
    if alpha.len() != op.domain_dim() {
        return Err(SensitivityError::DimensionMismatch {
            expected: op.domain_dim(),
            actual: alpha.len(),
        });
    }
    let mut j = DMatrix::zeros(op.data_dim(), alpha.len());
    let mut x = alpha.clone();
    for k in 0..alpha.len() {
        x[k] = alpha[k] + epsilon;
        let plus = op.apply(&x).map_err(|e| failure(&format!("column {k}, +epsilon"), e))?;
        x[k] = alpha[k] - epsilon;
        let minus = op.apply(&x).map_err(|e| failure(&format!("column {k}, -epsilon"), e))?;
        x[k] = alpha[k];
        j.set_column(k, &((plus - minus) / (2.0 * epsilon)));
    }
    Ok(JacobianMatrix(j))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeEstimate {
    /// Largest observed ratio, a lower bound on the cone constant.
    pub constant: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

fn sample_ball(rng: &mut ChaCha8Rng, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = center.len();
    let mut d = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = d.norm().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    d *= r / norm;
    center + d
}

/// Samples `samples` pairs `(x, x̃)` uniformly in the ball of `radius` about
/// `x_center` and returns the largest
/// `|F(x) - F(x̃) - F'(x)(x - x̃)| / |F(x) - F(x̃)|`. Pairs whose denominator
/// is negligible are skipped.
pub fn estimate_tangential_cone_constant<F: ForwardOperator + ?Sized>(
    op: &F,
    x_center: &DVector<f64>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<ConeEstimate, SensitivityError> {
    if !(radius > 0.0) || samples == 0 {
        return Err(SensitivityError::EstimationFailed("radius and sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = ConeEstimate {
        constant: 0.0,
        pairs_used: 0,
        pairs_skipped: 0,
    };
    for _ in 0..samples {
        let x = sample_ball(&mut rng, x_center, radius);
        let xt = sample_ball(&mut rng, x_center, radius);
        if !op.in_domain(&x) || !op.in_domain(&xt) {
            return Err(SensitivityError::EstimationFailed(
                "sample left the operator domain; reduce the radius".into(),
            ));
        }
        let fx = op.apply(&x).map_err(|e| failure("forward", e))?;
        let fxt = op.apply(&xt).map_err(|e| failure("forward", e))?;
        let lin = op.derivative_apply(&x, &(&x - &xt)).map_err(|e| failure("derivative", e))?;
        let diff = &fx - &fxt;
        let den = diff.norm();
        if den <= 1e-12 * (1.0 + fx.norm()) {
            est.pairs_skipped += 1;
            continue;
        }
        est.constant = est.constant.max((diff - lin).norm() / den);
        est.pairs_used += 1;
    }
    if est.pairs_used == 0 {
        return Err(SensitivityError::EstimationFailed("all sampled pairs were degenerate".into()));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::LinearOperator;

    #[test]
    fn linear_operator_is_reproduced() {
        let a = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0) + 0.5);
        let op = LinearOperator::new(a.clone());
        let j = fd_jacobian_oracle(&op, &DVector::from_element(3, 0.3), 1e-3).unwrap();
        assert!((j.0 - a).amax() < 1e-12);
    }

    #[test]
    fn linear_operator_has_zero_cone_constant() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let op = LinearOperator::new(a);
        let est = estimate_tangential_cone_constant(&op, &DVector::zeros(3), 1.0, 20, 3).unwrap();
        assert!(est.constant < 1e-12);
        assert_eq!(est.pairs_used, 20);
    }

    #[test]
    fn zero_operator_is_degenerate() {
        let op = LinearOperator::new(DMatrix::zeros(2, 2));
        let err = estimate_tangential_cone_constant(&op, &DVector::zeros(2), 1.0, 5, 0).unwrap_err();
        assert!(matches!(err, SensitivityError::EstimationFailed(_)));
    }
}
