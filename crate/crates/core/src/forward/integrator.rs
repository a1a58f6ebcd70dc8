//! θ-method time stepping for `M ü + f_int(u; α) = f_ext(t)`.
//!
//! The system is written in first-order form `u' = v`, `M v' = g(u, t)` with
//! `g = f_ext - f_int`, and the θ-scheme is applied to both equations.
//! Eliminating `v_{n+1}` leaves one nonlinear system per step:
//!
//! ```text
//! r(u) = M (u - u_n - Δt v_n) + θ²Δt² (f_int(u) - f_ext(t_{n+1})) - θ(1-θ)Δt² g_n = 0
//! v_{n+1} = (u_{n+1} - u_n) / (θ Δt) - (1 - θ) / θ · v_n
//! ```
//!
//! whose Jacobian `M + θ²Δt² K(u)` is symmetric and, for moderate strains,
//! positive definite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assembly::{Assembler, CoefficientField, DamageLayer};
use super::band::BandMatrix;
use super::excitation::ExcitationSpec;
use super::field::{DataLayout, DisplacementField};
use super::material::MaterialModel;
use super::mesh::{MeshSpec, PlateMesh};
use super::ForwardError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeIntegratorConfig {
    pub theta: f64,
    pub dt: f64,
    pub steps: usize,
    /// Newton stops when `|r| <= newton_tol * scale`, where `scale` is the
    /// size of the known terms of the step equation, or when `|r|` is below
    /// the round-off level of the force evaluation (see also `STALL_RTOL`).
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub tangent: TangentMode,
}

impl Default for TimeIntegratorConfig {
    /// Implicit Euler, 16 steps of 0.25 on `[0, 4]`.
    fn default() -> Self {
        Self {
            theta: 1.0,
            dt: 0.25,
            steps: 16,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            tangent: TangentMode::Analytic,
        }
    }
}

impl TimeIntegratorConfig {
    pub fn t_end(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn validate(&self) -> Result<(), ForwardError> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(ForwardError::InvalidConfig(format!(
                "theta = {} outside [1/2, 1]",
                self.theta
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.steps == 0 {
            return Err(ForwardError::InvalidConfig(format!(
                "time grid dt = {}, steps = {}",
                self.dt, self.steps
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(ForwardError::InvalidConfig("newton tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Newton also accepts an iterate once the residual stops contracting after
/// dropping by this factor: the stress evaluation has an absolute round-off
/// floor that a purely relative tolerance cannot get below for small loads.
pub const STALL_RTOL: f64 = 1e-8;

/// Residual norms of one Newton solve, starting with the initial guess.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norms: Vec<f64>,
}

/// Newton's method for `r(u) = 0`. `solve_step(u, r)` returns the correction
/// `Δ` with `J(u) Δ = -r`. Stops when `|r| <= tol`, or when the residual has
/// dropped below `STALL_RTOL |r_0|` and no longer halves per iteration.
pub fn newton_solve_timestep<R, S>(
    mut residual_fn: R,
    mut solve_step: S,
    guess: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, NewtonReport), ForwardError>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>, ForwardError>,
    S: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, ForwardError>,
{
    let mut u = guess;
    let mut report = NewtonReport::default();
    let mut r = residual_fn(&u)?;
    let r0 = r.norm();
    report.residual_norms.push(r0);
    while r.norm() > tol {
        if report.iterations == max_iter || !r.norm().is_finite() {
            return Err(ForwardError::NewtonDiverged {
                step: None,
                iterations: max_iter,
                residual: r.norm(),
            });
        }
        let previous = r.norm();
        u += solve_step(&u, &r)?;
        r = residual_fn(&u)?;
        report.iterations += 1;
        let norm = r.norm();
        report.residual_norms.push(norm);
        if norm <= STALL_RTOL * r0 && norm > 0.5 * previous {
            break;
        }
    }
    Ok((u, report))
}

/// Everything needed to evaluate `α ↦ u`: mesh, material, mass, load shape,
/// and time grid.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    assembler: Assembler,
    mass: BandMatrix,
    load: DVector<f64>,
    excitation: ExcitationSpec,
    integrator: TimeIntegratorConfig,
    layout: DataLayout,
}

impl ForwardProblem {
    /// `material` is used as given; pass nondimensionalized moduli.
    pub fn new(
        mesh: &MeshSpec,
        material: MaterialModel,
        density: f64,
        excitation: ExcitationSpec,
        integrator: TimeIntegratorConfig,
    ) -> Result<Self, ForwardError> {
        integrator.validate()?;
        excitation.validate()?;
        let material = MaterialModel::new(material.mu, material.nu)?;
        let mesh = PlateMesh::new(mesh)?;
        let (ci, cj) = mesh.center_surface_knot();
        let assembler = Assembler::new(mesh, material, density)?;
        let mass = assembler.mass();
        let load = assembler.surface_bump_load(ci, cj);
        let layout = DataLayout::new(assembler.nodal_weights(), integrator.dt, integrator.steps);
        Ok(Self {
            assembler,
            mass,
            load,
            excitation,
            integrator,
            layout,
        })
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn mesh(&self) -> &PlateMesh {
        self.assembler.mesh()
    }

    pub fn mass(&self) -> &BandMatrix {
        &self.mass
    }

    pub fn integrator(&self) -> &TimeIntegratorConfig {
        &self.integrator
    }

    pub fn excitation(&self) -> &ExcitationSpec {
        &self.excitation
    }

    pub fn layout(&self) -> &DataLayout {
        &self.layout
    }

    pub fn dof_count(&self) -> usize {
        self.assembler.dof_count()
    }

    pub fn dictionary_size(&self) -> usize {
        self.assembler.dictionary_size()
    }

    /// Same problem with a different integrator.
    pub fn with_integrator(&self, integrator: TimeIntegratorConfig) -> Result<Self, ForwardError> {
        integrator.validate()?;
        let mut p = self.clone();
        p.layout = DataLayout::new(self.assembler.nodal_weights(), integrator.dt, integrator.steps);
        p.integrator = integrator;
        Ok(p)
    }

    /// Same problem with a different through-thickness damage profile.
    pub fn with_damage_layer(&self, layer: DamageLayer) -> Self {
        let mut p = self.clone();
        p.assembler = p.assembler.with_damage_layer(layer);
        p
    }

    /// Same problem with a different excitation.
    pub fn with_excitation(&self, excitation: ExcitationSpec) -> Result<Self, ForwardError> {
        excitation.validate()?;
        let mut p = self.clone();
        p.excitation = excitation;
        Ok(p)
    }

    /// Same problem with a different spatial load vector (free dofs).
    pub fn with_load(&self, load: DVector<f64>) -> Result<Self, ForwardError> {
        if load.len() != self.dof_count() {
            return Err(ForwardError::InvalidConfig(format!(
                "load has {} entries, expected {}",
                load.len(),
                self.dof_count()
            )));
        }
        let mut p = self.clone();
        p.load = load;
        Ok(p)
    }

    /// External load vector at time `t`.
    pub fn external_force(&self, t: f64) -> DVector<f64> {
        &self.load * self.excitation.waveform(t)
    }

    /// Jacobian of the step residual, `M + θ²Δt² K(u)`.
    pub fn step_matrix(&self, field: &CoefficientField, u: &DVector<f64>) -> Result<BandMatrix, ForwardError> {
        let th = self.integrator.theta * self.integrator.dt;
        let a = self.assembler.tangent(field, u)?;
        let mut out = self.mass.clone();
        out.scaled_add(th * th, &a);
        Ok(out)
    }

    /// Solves from rest (`u0 = u1 = 0`).
    pub fn solve(&self, field: &CoefficientField) -> Result<DisplacementField, ForwardError> {
        let zero = DVector::zeros(self.dof_count());
        self.solve_forward(field, &zero, &zero)
    }

    pub fn solve_forward(
        &self,
        field: &CoefficientField,
        u0: &DVector<f64>,
        u1: &DVector<f64>,
    ) -> Result<DisplacementField, ForwardError> {
        let n = self.dof_count();
        if u0.len() != n || u1.len() != n {
            return Err(ForwardError::InvalidConfig(format!(
                "initial data must have {n} free dofs"
            )));
        }
        let cfg = self.integrator;
        let (theta, dt) = (cfg.theta, cfg.dt);
        let th2 = theta * theta * dt * dt;
        let cross = theta * (1.0 - theta) * dt * dt;

        let mut displacements = Vec::with_capacity(cfg.steps + 1);
        let mut velocities = Vec::with_capacity(cfg.steps + 1);
        let mut reports = Vec::with_capacity(cfg.steps);
        let mut u = u0.clone();
        let mut v = u1.clone();
        let round_off = self.assembler.force_round_off(field)?;
        let mut g = self.external_force(0.0) - self.assembler.internal_force(field, &u)?;
        displacements.push(u.clone());
        velocities.push(v.clone());

        for step in 0..cfg.steps {
            let t_next = (step + 1) as f64 * dt;
            let f_next = self.external_force(t_next);
            // Known part of the residual: -M(u_n + Δt v_n) - θ²Δt² f_{n+1} - θ(1-θ)Δt² g_n.
            let predictor = &u + &v * dt;
            let known = -self.mass.mul_vec(&predictor) - &f_next * th2 - &g * cross;
            let scale = known.norm();
            let residual = |w: &DVector<f64>| -> Result<DVector<f64>, ForwardError> {
                Ok(self.mass.mul_vec(w) + self.assembler.internal_force(field, w)? * th2 + &known)
            };
            let tol = (cfg.newton_tol * scale).max(th2 * round_off).max(f64::MIN_POSITIVE);
            let (u_next, report) = match cfg.tangent {
                TangentMode::Analytic => newton_solve_timestep(
                    residual,
                    |w, r| Ok(-self.step_matrix(field, w)?.cholesky()?.solve(r)),
                    predictor.clone(),
                    tol,
                    cfg.newton_max_iter,
                ),
                TangentMode::FiniteDifference => newton_solve_timestep(
                    residual,
                    |w, r| {
                        let j = fd_jacobian(&residual, w)?;
                        j.lu()
                            .solve(&-r)
                            .ok_or_else(|| ForwardError::LinearSolve("singular finite-difference Jacobian".into()))
                    },
                    predictor.clone(),
                    tol,
                    cfg.newton_max_iter,
                ),
            }
            .map_err(|e| e.at_step(step + 1))?;

            let v_next = (&u_next - &u) / (theta * dt) - &v * ((1.0 - theta) / theta);
            g = f_next - self.assembler.internal_force(field, &u_next)?;
            u = u_next;
            v = v_next;
            displacements.push(u.clone());
            velocities.push(v.clone());
            reports.push(report);
        }
        Ok(DisplacementField {
            dt,
            displacements,
            velocities,
            newton: reports,
        })
    }
}

/// Central-difference Jacobian of `residual` at `u`.
pub fn fd_jacobian<R>(residual: &R, u: &DVector<f64>) -> Result<DMatrix<f64>, ForwardError>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>, ForwardError>,
{
    let n = u.len();
    let scale = u.amax().max(1e-3);
    let eps = 1e-6 * scale;
    let mut j = DMatrix::zeros(n, n);
    let mut w = u.clone();
    for c in 0..n {
        w[c] = u[c] + eps;
        let rp = residual(&w)?;
        w[c] = u[c] - eps;
        let rm = residual(&w)?;
        w[c] = u[c];
        j.set_column(c, &((rp - rm) / (2.0 * eps)));
    }
    Ok(j)
}
