use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::forward::ForwardError;
use crate::sensitivity::SensitivityError;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("point outside the operator domain")]
    OutOfDomain,
}

/// A (nonlinear) forward operator `F: D(F) ⊂ R^N -> R^M` together with its
/// Fréchet derivative and the adjoint of the derivative.
///
/// Both spaces carry the Euclidean inner product; operators whose data space
/// has a weighted inner product must fold the weights into their output.
pub trait ForwardOperator {
    fn domain_dim(&self) -> usize;
    fn data_dim(&self) -> usize;

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, OperatorError>;

    /// `F'(x) h`.
    fn derivative_apply(
        &self,
        x: &DVector<f64>,
        h: &DVector<f64>,
    ) -> Result<DVector<f64>, OperatorError>;

    /// `F'(x)^* w`.
    fn adjoint_apply(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>, OperatorError>;

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        x.len() == self.domain_dim() && x.iter().all(|v| v.is_finite())
    }
}

impl<T: ForwardOperator + ?Sized> ForwardOperator for &T {
    fn domain_dim(&self) -> usize {
        (**self).domain_dim()
    }
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        (**self).apply(x)
    }
    fn derivative_apply(
        &self,
        x: &DVector<f64>,
        h: &DVector<f64>,
    ) -> Result<DVector<f64>, OperatorError> {
        (**self).derivative_apply(x, h)
    }
    fn adjoint_apply(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>, OperatorError> {
        (**self).adjoint_apply(x, w)
    }
    fn in_domain(&self, x: &DVector<f64>) -> bool {
        (**self).in_domain(x)
    }
}

fn check_len(expected: usize, v: &DVector<f64>) -> Result<(), OperatorError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(OperatorError::DimensionMismatch {
            expected,
            actual: v.len(),
        })
    }
}

/// `F(x) = A x`. Used as the linear fixture throughout the tests.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
}

impl LinearOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ForwardOperator for LinearOperator {
    fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn data_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        check_len(self.domain_dim(), x)?;
        Ok(&self.matrix * x)
    }

    fn derivative_apply(
        &self,
        x: &DVector<f64>,
        h: &DVector<f64>,
    ) -> Result<DVector<f64>, OperatorError> {
        check_len(self.domain_dim(), x)?;
        check_len(self.domain_dim(), h)?;
        Ok(&self.matrix * h)
    }

    fn adjoint_apply(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>, OperatorError> {
        check_len(self.domain_dim(), x)?;
        check_len(self.data_dim(), w)?;
        Ok(self.matrix.tr_mul(w))
    }
}
