use std::sync::{Arc, Mutex};

use nalgebra::DVector;

use super::{
    adjoint_apply, coefficient_field, coefficient_hash, derivative_apply, JacobianMatrix,
    SensitivityWorkspace,
};
use crate::forward::{DisplacementField, ForwardProblem};
use crate::solvers::{ForwardOperator, OperatorError};

#[derive(Debug, Clone)]
struct Linearization {
    hash: u64,
    alpha: DVector<f64>,
    field: Arc<DisplacementField>,
    workspace: Option<Arc<SensitivityWorkspace>>,
    jacobian: Option<Arc<JacobianMatrix>>,
}

/// How `F'(α)^*` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointMode {
    /// Transpose of the dense Jacobian, one tangent solve per coefficient.
    #[default]
    Columnwise,
    /// Backward sweep through the transposed step equations.
    Sweep,
}

/// `F(α) = W u(α)`: coefficient vector to weighted displacement data.
///
/// The last trajectory and its linearization are cached, so alternating
/// calls of `apply`, `derivative_apply` and `adjoint_apply` at the same `α`
/// solve the forward problem once.
#[derive(Debug)]
pub struct PlateOperator {
    problem: ForwardProblem,
    cache: Mutex<Option<Linearization>>,
    adjoint: AdjointMode,
}

impl PlateOperator {
    pub fn new(problem: ForwardProblem) -> Self {
        Self {
            problem,
            cache: Mutex::new(None),
            adjoint: AdjointMode::default(),
        }
    }

    pub fn with_adjoint_mode(mut self, mode: AdjointMode) -> Self {
        self.adjoint = mode;
        self
    }

    pub fn adjoint_mode(&self) -> AdjointMode {
        self.adjoint
    }

    pub fn problem(&self) -> &ForwardProblem {
        &self.problem
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Option<Linearization>> {
        self.cache.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn check(&self, x: &DVector<f64>) -> Result<(), OperatorError> {
        if x.len() != self.domain_dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.domain_dim(),
                actual: x.len(),
            });
        }
        if !self.in_domain(x) {
            return Err(OperatorError::OutOfDomain);
        }
        Ok(())
    }

    /// Forward trajectory at `x`, from cache when possible.
    pub fn trajectory(&self, x: &DVector<f64>) -> Result<Arc<DisplacementField>, OperatorError> {
        self.check(x)?;
        let hash = coefficient_hash(x);
        if let Some(c) = self.lock().as_ref() {
            if c.hash == hash && &c.alpha == x {
                return Ok(c.field.clone());
            }
        }
        let field = Arc::new(self.problem.solve(&coefficient_field(&self.problem, x)?)?);
        *self.lock() = Some(Linearization {
            hash,
            alpha: x.clone(),
            field: field.clone(),
            workspace: None,
            jacobian: None,
        });
        Ok(field)
    }

    /// Linearization at `x`, built on first use.
    pub fn workspace(&self, x: &DVector<f64>) -> Result<Arc<SensitivityWorkspace>, OperatorError> {
        let field = self.trajectory(x)?;
        if let Some(ws) = self.lock().as_ref().and_then(|c| c.workspace.clone()) {
            if ws.matches(x) {
                return Ok(ws);
            }
        }
        let ws = Arc::new(SensitivityWorkspace::new(&self.problem, x, &field)?);
        if let Some(c) = self.lock().as_mut() {
            if c.hash == coefficient_hash(x) {
                c.workspace = Some(ws.clone());
            }
        }
        Ok(ws)
    }

    /// Dense Jacobian at `x`, cached alongside the workspace.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<Arc<JacobianMatrix>, OperatorError> {
        let ws = self.workspace(x)?;
        let hash = coefficient_hash(x);
        if let Some(c) = self.lock().as_ref() {
            if c.hash == hash {
                if let Some(j) = &c.jacobian {
                    return Ok(j.clone());
                }
            }
        }
        let j = Arc::new(JacobianMatrix::compute(&self.problem, &ws, x)?);
        if let Some(c) = self.lock().as_mut() {
            if c.hash == hash {
                c.jacobian = Some(j.clone());
            }
        }
        Ok(j)
    }
}

impl ForwardOperator for PlateOperator {
    fn domain_dim(&self) -> usize {
        self.problem.dictionary_size()
    }

    fn data_dim(&self) -> usize {
        self.problem.layout().data_dim()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        let field = self.trajectory(x)?;
        Ok(self.problem.layout().restrict_to_measurements(&field))
    }

    fn derivative_apply(&self, x: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        if h.len() != self.domain_dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.domain_dim(),
                actual: h.len(),
            });
        }
        let ws = self.workspace(x)?;
        Ok(derivative_apply(&self.problem, &ws, x, h)?)
    }

    fn adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        if w.len() != self.data_dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.data_dim(),
                actual: w.len(),
            });
        }
        match self.adjoint {
            AdjointMode::Columnwise => Ok(self.jacobian(x)?.adjoint(w)),
            AdjointMode::Sweep => {
                let ws = self.workspace(x)?;
                Ok(adjoint_apply(&self.problem, &ws, x, w)?)
            }
        }
    }

    /// Finite, nonnegative coefficients.
    fn in_domain(&self, x: &DVector<f64>) -> bool {
        x.len() == self.domain_dim() && x.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::tests::small_problem;

    #[test]
    fn cache_reuses_trajectory() {
        let op = PlateOperator::new(small_problem(1.0));
        let x = DVector::from_element(op.domain_dim(), 1.0);
        let a = op.trajectory(&x).unwrap();
        let b = op.trajectory(&x).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let mut y = x.clone();
        y[0] = 1.5;
        let c = op.trajectory(&y).unwrap();
        assert!(!Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn sweep_and_dense_adjoints_agree() {
        let sweep = PlateOperator::new(small_problem(0.5)).with_adjoint_mode(AdjointMode::Sweep);
        let dense = PlateOperator::new(small_problem(0.5));
        let x = DVector::from_fn(sweep.domain_dim(), |k, _| 1.0 + 0.01 * k as f64);
        let w = DVector::from_fn(sweep.data_dim(), |k, _| ((k as f64) * 0.31).sin());
        let a = sweep.adjoint_apply(&x, &w).unwrap();
        let b = dense.adjoint_apply(&x, &w).unwrap();
        assert!((&a - &b).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn negative_coefficients_rejected() {
        let op = PlateOperator::new(small_problem(1.0));
        let mut x = DVector::from_element(op.domain_dim(), 1.0);
        x[2] = -0.1;
        assert!(matches!(op.apply(&x), Err(OperatorError::OutOfDomain)));
    }
}
