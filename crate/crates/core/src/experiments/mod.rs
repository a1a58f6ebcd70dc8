//! Synthetic identification experiments: scenarios, noisy data, runs of
//! both methods, and the files they leave behind.

mod output;
mod scenario;
pub mod verify;

use std::path::PathBuf;
use web_time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{
    emit_comparison, emit_outputs, heatmap_pgm, write_alpha_csv, write_residuals_csv, HEATMAP_UPSAMPLING,
};
pub use scenario::{
    build_scenario, rescale_to_block, DamageEntry, DamagePlacement, NoiseLevel, Overrides, ScenarioKind,
    ScenarioSpec, BLOCK_PATTERN, REFERENCE_HALF_WIDTH,
};

use crate::forward::{
    Axis, CoefficientField, DictionaryField, DisplacementField, ForwardError, MeshSpec,
};
use crate::sensitivity::PlateOperator;
use crate::solvers::{
    run_solver, ForwardOperator, IterationRecord, Method, OperatorError, RunOptions, SolverError,
    StoppingReason,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Additive Gaussian noise rescaled to norm exactly `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub seed: u64,
    pub delta: f64,
}

/// Returns `y + η` with `|η| = δ`; `δ = 0` returns `y` unchanged. The draw is
/// a function of the seed and the data length only.
pub fn add_noise(y: &DVector<f64>, model: &NoiseModel) -> DVector<f64> {
    if model.delta == 0.0 || y.is_empty() {
        return y.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let eta = DVector::from_fn(y.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = eta.norm();
    if norm == 0.0 {
        return y.clone();
    }
    y + eta * (model.delta / norm)
}

/// Exact and noisy data of a scenario.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub truth: DVector<f64>,
    pub exact: DVector<f64>,
    pub noisy: DVector<f64>,
    pub delta: f64,
}

fn refine(axis: Axis) -> Axis {
    Axis {
        knots: 2 * axis.knots - 1,
        ..axis
    }
}

/// Simulates `truth` on the once-refined mesh and samples the result at the
/// coarse nodes, so the data is not produced by the model used to invert it.
/// The load keeps the coarse profile and the coefficient field is the coarse
/// surface function evaluated at the fine knots.
pub fn synthesize_refined(spec: &ScenarioSpec, truth: &DVector<f64>) -> Result<DVector<f64>, ExperimentError> {
    let coarse = spec.forward_problem()?;
    let cm = coarse.mesh();
    let fine_spec = MeshSpec {
        thickness: refine(spec.mesh.thickness),
        width: refine(spec.mesh.width),
        depth: refine(spec.mesh.depth),
    };
    let fine = spec.forward_problem_on(&fine_spec)?;
    let (ci, cj) = cm.center_surface_knot();
    let load = fine.assembler().surface_load(|x2, x3| cm.surface_basis(ci, cj, x2, x3));
    let fine = fine.with_load(load)?;
    let fm = fine.mesh();

    let coarse_alpha = DictionaryField::from_vector(cm, truth.clone())?;
    let [_, f2, f3] = fm.knots();
    let [_, c2, c3] = cm.knots();
    let mut fine_alpha = DVector::zeros(f2 * f3);
    for p in 0..f2 {
        for q in 0..f3 {
            let (x2, x3) = (fm.axis(1).knot(p), fm.axis(2).knot(q));
            let mut a = 0.0;
            for i in 0..c2 {
                for j in 0..c3 {
                    a += coarse_alpha.get(i, j) * cm.surface_basis(i, j, x2, x3);
                }
            }
            fine_alpha[f3 * p + q] = a;
        }
    }
    let field = CoefficientField::Dictionary(DictionaryField::from_vector(fm, fine_alpha)?);
    let trajectory = fine.solve(&field)?;

    let pick: Vec<usize> = cm
        .free_nodes()
        .iter()
        .map(|&node| {
            let [n1, n2, _] = cm.knots();
            let (a, b, c) = (node % n1, (node / n1) % n2, node / (n1 * n2));
            fm.free_index(fm.node_index(2 * a, 2 * b, 2 * c))
                .expect("interior coarse nodes are interior fine nodes")
        })
        .collect();
    let sample = |u: &DVector<f64>| DVector::from_fn(3 * pick.len(), |k, _| u[3 * pick[k / 3] + k % 3]);
    let sampled = DisplacementField {
        dt: trajectory.dt,
        displacements: trajectory.displacements.iter().map(sample).collect(),
        velocities: trajectory.velocities.iter().map(sample).collect(),
        newton: trajectory.newton.clone(),
    };
    Ok(coarse.layout().restrict_to_measurements(&sampled))
}

/// Exact data from the scenario truth (on the refined mesh when requested)
/// and its noisy version.
pub fn synthesize(spec: &ScenarioSpec, op: &PlateOperator) -> Result<SyntheticData, ExperimentError> {
    let truth = spec.truth();
    let exact = if spec.mitigate_inverse_crime {
        synthesize_refined(spec, &truth)?
    } else {
        op.apply(&truth)?
    };
    let delta = spec.noise.resolve(exact.norm());
    let noisy = add_noise(&exact, &NoiseModel { seed: spec.seed, delta });
    Ok(SyntheticData {
        truth,
        exact,
        noisy,
        delta,
    })
}

/// Everything a run produced. Serialized as `run.json` minus timings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioSpec,
    pub method: Method,
    pub delta: f64,
    pub tau: f64,
    pub omega: Option<f64>,
    /// Residual level the run was asked to reach; `τ δ` unless overridden.
    pub target_residual: f64,
    pub exact_data_norm: f64,
    pub reason: StoppingReason,
    pub failure: Option<String>,
    pub iterations: usize,
    pub final_residual: f64,
    pub error_to_truth: f64,
    pub relative_error: f64,
    pub alpha_final: DictionaryField,
    pub truth: DictionaryField,
    #[serde(skip)]
    pub records: Vec<IterationRecord>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunReport {
    pub fn alpha_matrix(&self) -> DMatrix<f64> {
        self.alpha_final.to_matrix()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual_norm).collect()
    }

    /// `true` iff the residual never increased.
    pub fn residual_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].residual_norm <= w[0].residual_norm * (1.0 + 1e-12))
    }

    /// Surface indices of the `k` largest recovered coefficients, largest
    /// first; ties by index.
    pub fn top_indices(&self, k: usize) -> Vec<(usize, usize)> {
        let a = &self.alpha_final;
        let mut idx: Vec<usize> = (0..a.len()).collect();
        idx.sort_by(|&p, &q| a.coefficients[q].total_cmp(&a.coefficients[p]).then(p.cmp(&q)));
        idx.into_iter().take(k).map(|p| (p / a.n_cols, p % a.n_cols)).collect()
    }
}

/// Inverts `data` with `method`, starting from the homogeneous plate.
/// `target` replaces the discrepancy level `τ δ` when given.
pub fn invert(
    spec: &ScenarioSpec,
    op: &PlateOperator,
    data: &SyntheticData,
    method: Method,
    target: Option<f64>,
) -> Result<RunReport, ExperimentError> {
    let tau = spec.resolved_tau();
    let stop_delta = target.map_or(data.delta, |t| t / tau);
    let cfg = spec.solver_config(stop_delta)?;
    let x0 = DVector::from_element(op.domain_dim(), 1.0);
    let options = RunOptions {
        truth: Some(data.truth.clone()),
        assert_fejer: false,
    };
    let start = Instant::now();
    let run = run_solver(method, op, &data.noisy, &x0, &cfg, &options)?;
    let wall_time = start.elapsed().as_secs_f64();
    let mesh = op.problem().mesh();
    let error = (&run.x - &data.truth).norm();
    Ok(RunReport {
        scenario: ScenarioSpec { method, ..spec.clone() },
        method,
        delta: data.delta,
        tau,
        omega: run.omega,
        target_residual: tau * stop_delta,
        exact_data_norm: data.exact.norm(),
        reason: run.reason,
        failure: run.failure.clone(),
        iterations: run.iterations(),
        final_residual: run.final_residual(),
        error_to_truth: error,
        relative_error: error / data.truth.norm(),
        alpha_final: DictionaryField::from_vector(mesh, run.x.clone())?,
        truth: DictionaryField::from_vector(mesh, data.truth.clone())?,
        records: run.records,
        wall_time,
    })
}

/// Builds the operator, synthesizes data, and runs `spec.method`.
pub fn run_experiment(spec: &ScenarioSpec) -> Result<RunReport, ExperimentError> {
    let op = PlateOperator::new(spec.forward_problem()?);
    let data = synthesize(spec, &op)?;
    invert(spec, &op, &data, spec.method, None)
}

/// Both methods on identical data.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub resesop: RunReport,
    pub landweber: RunReport,
    /// First Landweber iteration whose residual is at or below RESESOP's
    /// final residual.
    pub landweber_iterations_to_match: Option<usize>,
}

impl Comparison {
    /// Landweber iterations needed per RESESOP iteration to reach the same
    /// residual.
    pub fn iteration_ratio(&self) -> Option<f64> {
        let n = self.landweber_iterations_to_match?;
        Some(n as f64 / self.resesop.iterations.max(1) as f64)
    }
}

/// Runs RESESOP with the discrepancy principle, then Landweber until it
/// reaches RESESOP's final residual (or the iteration cap). Stopping
/// Landweber there compares the cost of reaching the same residual level;
/// that level is below `τ δ`, so the Landweber run satisfies the discrepancy
/// principle as well.
pub fn compare_methods(spec: &ScenarioSpec) -> Result<Comparison, ExperimentError> {
    let op = PlateOperator::new(spec.forward_problem()?);
    let data = synthesize(spec, &op)?;
    let resesop = invert(spec, &op, &data, Method::Resesop, None)?;
    let target = (resesop.reason == StoppingReason::DiscrepancySatisfied && resesop.final_residual > 0.0)
        .then_some(resesop.final_residual);
    let landweber = invert(spec, &op, &data, Method::Landweber, target)?;
    let level = resesop.final_residual;
    let landweber_iterations_to_match = landweber
        .records
        .iter()
        .find(|r| r.residual_norm <= level)
        .map(|r| r.index);
    Ok(Comparison {
        resesop,
        landweber,
        landweber_iterations_to_match,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(name: &str) -> ScenarioSpec {
        let mut o = Overrides::new();
        for (k, v) in [
            ("surface_knots", "5"),
            ("thickness_knots", "2"),
            ("steps", "4"),
            ("dt", "0.5"),
            ("max_iterations", "3"),
        ] {
            o.set(k, v).unwrap();
        }
        build_scenario(name, &o).unwrap()
    }

    #[test]
    fn noise_has_exact_norm_and_is_seeded() {
        let y = DVector::from_fn(50, |i, _| (i as f64).cos());
        let model = NoiseModel { seed: 7, delta: 0.3 };
        let a = add_noise(&y, &model);
        assert!(((&a - &y).norm() - 0.3).abs() < 1e-12);
        assert_eq!(a, add_noise(&y, &model));
        assert_ne!(a, add_noise(&y, &NoiseModel { seed: 8, delta: 0.3 }));
        assert_eq!(add_noise(&y, &NoiseModel { seed: 7, delta: 0.0 }), y);
    }

    #[test]
    fn homogeneous_exact_data_stops_immediately() {
        let mut spec = tiny("homogeneous");
        spec.noise = NoiseLevel::Absolute(0.0);
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.reason, StoppingReason::DiscrepancySatisfied);
        assert_eq!(report.final_residual, 0.0);
    }

    #[test]
    fn refined_data_is_close_to_coarse_data() {
        let spec = tiny("exp1");
        let op = PlateOperator::new(spec.forward_problem().unwrap());
        let truth = spec.truth();
        let coarse = op.apply(&truth).unwrap();
        let fine = synthesize_refined(&spec, &truth).unwrap();
        assert_eq!(fine.len(), coarse.len());
        let rel = (&fine - &coarse).norm() / coarse.norm();
        assert!(rel > 0.0 && rel < 0.5, "relative model mismatch {rel}");
    }

    #[test]
    fn top_indices_order() {
        let spec = tiny("exp1");
        let report = run_experiment(&ScenarioSpec {
            max_iterations: 1,
            ..spec
        })
        .unwrap();
        let top = report.top_indices(3);
        let a = &report.alpha_final;
        assert!(a.get(top[0].0, top[0].1) >= a.get(top[1].0, top[1].1));
        assert!(a.get(top[1].0, top[1].1) >= a.get(top[2].0, top[2].1));
    }
}
