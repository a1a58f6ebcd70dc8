//! Derivative and adjoint of the discrete map `α ↦ u`.
//!
//! Both are exact for the discretized problem: the tangent recurrence is the
//! derivative of the θ-step equations, and the adjoint sweep is its transpose
//! run backwards in time. Neither depends on a continuous-time model.
//!
//! Differentiating one step with respect to `α` in direction `h` gives
//!
//! ```text
//! A_{n+1} δu_{n+1} = M (δu_n + Δt δv_n) - θ(1-θ)Δt² K_n δu_n + b_n h
//! δv_{n+1}         = (δu_{n+1} - δu_n) / (θΔt) - (1-θ)/θ · δv_n
//! b_n              = -(θ²Δt² B_{n+1} + θ(1-θ)Δt² B_n)
//! ```
//!
//! with `A_{n+1} = M + θ²Δt² K_{n+1}`, `K_n` the tangent stiffness and
//! `B_n` the dictionary force matrix, both at `u_n`.

mod oracle;
mod plate;

use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::forward::{
    BandCholesky, BandMatrix, CoefficientField, DictionaryField, DisplacementField, ForwardError,
    ForwardProblem,
};

pub use oracle::{estimate_tangential_cone_constant, fd_jacobian_oracle, ConeEstimate};
pub use plate::{AdjointMode, PlateOperator};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SensitivityError {
    #[error("workspace was built for a different coefficient vector")]
    StaleWorkspace,
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
}

/// Bitwise fingerprint of a coefficient vector.
pub fn coefficient_hash(alpha: &DVector<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    alpha.len().hash(&mut h);
    for v in alpha.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Linearization data of one forward solve: factored step matrices and the
/// stiffness and dictionary force matrices at every time level.
#[derive(Debug, Clone)]
pub struct SensitivityWorkspace {
    hash: u64,
    /// `A_{n+1}`, `n = 0..n_t`.
    factors: Vec<BandCholesky>,
    /// `K_n`, `n = 0..=n_t`.
    stiffness: Vec<BandMatrix>,
    /// `B_n`, `n = 0..=n_t`.
    dictionary: Vec<DMatrix<f64>>,
}

impl SensitivityWorkspace {
    pub fn new(
        problem: &ForwardProblem,
        alpha: &DVector<f64>,
        trajectory: &DisplacementField,
    ) -> Result<Self, SensitivityError> {
        let field = coefficient_field(problem, alpha)?;
        let asm = problem.assembler();
        let levels = problem.integrator().steps + 1;
        if trajectory.levels() != levels {
            return Err(SensitivityError::DimensionMismatch {
                expected: levels,
                actual: trajectory.levels(),
            });
        }
        let mut stiffness = Vec::with_capacity(levels);
        let mut dictionary = Vec::with_capacity(levels);
        let mut factors = Vec::with_capacity(levels - 1);
        for (n, u) in trajectory.displacements.iter().enumerate() {
            stiffness.push(asm.tangent(&field, u)?);
            dictionary.push(asm.dictionary_forces(u)?);
            if n > 0 {
                factors.push(problem.step_matrix(&field, u)?.cholesky()?);
            }
        }
        Ok(Self {
            hash: coefficient_hash(alpha),
            factors,
            stiffness,
            dictionary,
        })
    }

    pub fn matches(&self, alpha: &DVector<f64>) -> bool {
        self.hash == coefficient_hash(alpha)
    }

    fn check(&self, alpha: &DVector<f64>) -> Result<(), SensitivityError> {
        if self.matches(alpha) {
            Ok(())
        } else {
            Err(SensitivityError::StaleWorkspace)
        }
    }
}

pub(crate) fn coefficient_field(
    problem: &ForwardProblem,
    alpha: &DVector<f64>,
) -> Result<CoefficientField, SensitivityError> {
    Ok(CoefficientField::Dictionary(DictionaryField::from_vector(
        problem.mesh(),
        alpha.clone(),
    )?))
}

/// Runs the tangent recurrence for every column of `h` at once and returns
/// `δu_n` for all levels.
pub fn tangent_trajectory(
    problem: &ForwardProblem,
    ws: &SensitivityWorkspace,
    alpha: &DVector<f64>,
    h: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>, SensitivityError> {
    ws.check(alpha)?;
    if h.nrows() != problem.dictionary_size() {
        return Err(SensitivityError::DimensionMismatch {
            expected: problem.dictionary_size(),
            actual: h.nrows(),
        });
    }
    let cfg = problem.integrator();
    let (theta, dt) = (cfg.theta, cfg.dt);
    let impl_w = theta * theta * dt * dt;
    let cross = theta * (1.0 - theta) * dt * dt;
    let m = problem.mass();
    let ndof = problem.dof_count();

    let mut du = DMatrix::zeros(ndof, h.ncols());
    let mut dv = DMatrix::zeros(ndof, h.ncols());
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(du.clone());
    let mut bh_prev = &ws.dictionary[0] * h;
    for n in 0..cfg.steps {
        let bh_next = &ws.dictionary[n + 1] * h;
        let mut rhs = m.mul_mat(&(&du + &dv * dt)) - &bh_next * impl_w;
        if cross != 0.0 {
            rhs -= (ws.stiffness[n].mul_mat(&du) + &bh_prev) * cross;
        }
        let du_next = ws.factors[n].solve_mat(&rhs);
        dv = (&du_next - &du) / (theta * dt) - dv * ((1.0 - theta) / theta);
        du = du_next;
        out.push(du.clone());
        bh_prev = bh_next;
    }
    Ok(out)
}

/// `F'(α) h` as a weighted data vector.
pub fn derivative_apply(
    problem: &ForwardProblem,
    ws: &SensitivityWorkspace,
    alpha: &DVector<f64>,
    h: &DVector<f64>,
) -> Result<DVector<f64>, SensitivityError> {
    let hm = DMatrix::from_column_slice(h.len(), 1, h.as_slice());
    let traj = tangent_trajectory(problem, ws, alpha, &hm)?;
    let layout = problem.layout();
    let n = layout.dofs();
    let mut y = DVector::zeros(layout.data_dim());
    for (j, du) in traj.iter().enumerate() {
        y.rows_mut(j * n, n).copy_from(&du.column(0).component_mul(layout.scale()));
    }
    Ok(y)
}

/// Dense Jacobian of the data map; rows follow the data layout, columns the
/// dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix(pub DMatrix<f64>);

impl JacobianMatrix {
    pub fn compute(
        problem: &ForwardProblem,
        ws: &SensitivityWorkspace,
        alpha: &DVector<f64>,
    ) -> Result<Self, SensitivityError> {
        let nd = problem.dictionary_size();
        let traj = tangent_trajectory(problem, ws, alpha, &DMatrix::identity(nd, nd))?;
        let layout = problem.layout();
        let n = layout.dofs();
        let mut j = DMatrix::zeros(layout.data_dim(), nd);
        for (level, du) in traj.iter().enumerate() {
            for r in 0..n {
                let s = layout.scale()[r];
                for c in 0..nd {
                    j[(level * n + r, c)] = s * du[(r, c)];
                }
            }
        }
        Ok(Self(j))
    }

    pub fn apply(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.0 * h
    }

    pub fn adjoint(&self, w: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(w)
    }

    /// One CSV row per data entry, one column per coefficient.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SensitivityError> {
        let io = |e: csv::Error| SensitivityError::Forward(ForwardError::Io(e.to_string()));
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.0.ncols()).map(|k| format!("alpha_{k}")).collect();
        w.write_record(&header).map_err(io)?;
        for row in self.0.row_iter() {
            w.serialize(row.iter().collect::<Vec<_>>()).map_err(io)?;
        }
        w.flush()
            .map_err(|e| SensitivityError::Forward(ForwardError::Io(e.to_string())))
    }
}

/// `F'(α)^* w` by one backward sweep through the transposed recurrence.
pub fn adjoint_apply(
    problem: &ForwardProblem,
    ws: &SensitivityWorkspace,
    alpha: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>, SensitivityError> {
    ws.check(alpha)?;
    let layout = problem.layout();
    if w.len() != layout.data_dim() {
        return Err(SensitivityError::DimensionMismatch {
            expected: layout.data_dim(),
            actual: w.len(),
        });
    }
    let cfg = problem.integrator();
    let (theta, dt) = (cfg.theta, cfg.dt);
    let impl_w = theta * theta * dt * dt;
    let cross = theta * (1.0 - theta) * dt * dt;
    let ratio = (1.0 - theta) / theta;
    let m = problem.mass();

    let mut grad = DVector::zeros(problem.dictionary_size());
    let mut p = layout.weighted_block(w, cfg.steps);
    let mut q = DVector::zeros(problem.dof_count());
    for n in (0..cfg.steps).rev() {
        let z = &p + &q / (theta * dt);
        let lambda = ws.factors[n].solve(&z);
        // b_n^T λ
        grad -= ws.dictionary[n + 1].tr_mul(&lambda) * impl_w;
        if cross != 0.0 {
            grad -= ws.dictionary[n].tr_mul(&lambda) * cross;
        }
        let m_lambda = m.mul_vec(&lambda);
        let mut p_next = layout.weighted_block(w, n) + &m_lambda - &q / (theta * dt);
        if cross != 0.0 {
            p_next -= ws.stiffness[n].mul_vec(&lambda) * cross;
        }
        q = m_lambda * dt - q * ratio;
        p = p_next;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{
        Axis, ExcitationSpec, MaterialModel, MeshSpec, TimeIntegratorConfig,
    };

    pub(crate) fn small_problem(theta: f64) -> ForwardProblem {
        let mesh = MeshSpec {
            thickness: Axis { lo: -0.1, hi: 0.1, knots: 2 },
            width: Axis { lo: -3.0, hi: 3.0, knots: 5 },
            depth: Axis { lo: -3.0, hi: 3.0, knots: 5 },
        };
        let integrator = TimeIntegratorConfig {
            theta,
            steps: 10,
            dt: 0.3,
            ..TimeIntegratorConfig::default()
        };
        let excitation = ExcitationSpec {
            amplitude: 0.2,
            ..ExcitationSpec::default()
        };
        let material = MaterialModel::reference().nondimensionalized().0;
        ForwardProblem::new(&mesh, material, 1.0, excitation, integrator).unwrap()
    }

    fn sample_alpha(n: usize) -> DVector<f64> {
        DVector::from_fn(n, |k, _| 1.0 + 0.3 * ((k * 7 % 5) as f64) / 4.0)
    }

    fn workspace(p: &ForwardProblem, alpha: &DVector<f64>) -> SensitivityWorkspace {
        let traj = p.solve(&coefficient_field(p, alpha).unwrap()).unwrap();
        SensitivityWorkspace::new(p, alpha, &traj).unwrap()
    }

    #[test]
    fn adjoint_identity_holds() {
        for theta in [0.5, 0.75, 1.0] {
            let p = small_problem(theta);
            let alpha = sample_alpha(p.dictionary_size());
            let ws = workspace(&p, &alpha);
            let h = DVector::from_fn(alpha.len(), |k, _| ((k as f64) * 0.77).sin());
            let w = DVector::from_fn(p.layout().data_dim(), |k, _| ((k as f64) * 0.13).cos());
            let fh = derivative_apply(&p, &ws, &alpha, &h).unwrap();
            let fw = adjoint_apply(&p, &ws, &alpha, &w).unwrap();
            let lhs = fh.dot(&w);
            let rhs = h.dot(&fw);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * fh.norm() * w.norm(),
                "theta {theta}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn jacobian_matches_both_directions() {
        let p = small_problem(0.5);
        let alpha = sample_alpha(p.dictionary_size());
        let ws = workspace(&p, &alpha);
        let j = JacobianMatrix::compute(&p, &ws, &alpha).unwrap();
        let h = DVector::from_fn(alpha.len(), |k, _| 1.0 / (1.0 + k as f64));
        let w = DVector::from_fn(p.layout().data_dim(), |k, _| ((k % 11) as f64) - 5.0);
        let a = derivative_apply(&p, &ws, &alpha, &h).unwrap();
        assert!((j.apply(&h) - &a).norm() <= 1e-12 * a.norm());
        let b = adjoint_apply(&p, &ws, &alpha, &w).unwrap();
        assert!((j.adjoint(&w) - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = small_problem(1.0);
        let alpha = sample_alpha(p.dictionary_size());
        let ws = workspace(&p, &alpha);
        let h = DVector::from_fn(alpha.len(), |k, _| ((k * 3 % 7) as f64 - 3.0) / 3.0);
        let data = |a: &DVector<f64>| {
            let f = p.solve(&coefficient_field(&p, a).unwrap()).unwrap();
            p.layout().restrict_to_measurements(&f)
        };
        let eps = 1e-5;
        let fd = (data(&(&alpha + &h * eps)) - data(&(&alpha - &h * eps))) / (2.0 * eps);
        let an = derivative_apply(&p, &ws, &alpha, &h).unwrap();
        assert!((&fd - &an).norm() <= 1e-5 * an.norm(), "{} vs {}", fd.norm(), an.norm());
    }

    #[test]
    fn stale_workspace_rejected() {
        let p = small_problem(1.0);
        let alpha = sample_alpha(p.dictionary_size());
        let ws = workspace(&p, &alpha);
        let mut other = alpha.clone();
        other[3] += 1e-9;
        let h = DVector::zeros(alpha.len());
        assert_eq!(
            derivative_apply(&p, &ws, &other, &h),
            Err(SensitivityError::StaleWorkspace)
        );
        let w = DVector::zeros(p.layout().data_dim());
        assert_eq!(
            adjoint_apply(&p, &ws, &other, &w),
            Err(SensitivityError::StaleWorkspace)
        );
    }

    #[test]
    fn jacobian_csv_shape() {
        let j = JacobianMatrix(DMatrix::from_fn(3, 2, |i, k| (i + k) as f64));
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("alpha_0,alpha_1"));
        assert_eq!(text.lines().count(), 4);
    }
}
