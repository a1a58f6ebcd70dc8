//! Oracle suites shared by the `selftest` command and the acceptance tests.
//! Each suite returns a [`Check`] instead of panicking so that callers can
//! report every outcome.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::forward::material::{first_piola_reference, neo_hookean_energy};
use crate::forward::{CoefficientField, DictionaryField, ExcitationSpec, ForwardProblem, MaterialModel};
use crate::geometry::{
    intersection_objective_gradient, project_halfspace, project_hyperplane, project_hyperplane_intersection,
    project_stripe, project_two_halfspaces, HalfSpace, Hyperplane, Stripe,
};
use crate::sensitivity::{fd_jacobian_oracle, AdjointMode, PlateOperator};
use crate::solvers::{
    run_solver, ForwardOperator, LinearOperator, Method, RunOptions, SolverConfig, StoppingReason,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_failures(name: &str, failures: Vec<String>, ok_detail: String) -> Self {
        match failures.first() {
            None => Self::new(name, true, ok_detail),
            Some(first) => Self::new(name, false, format!("{} failure(s), first: {first}", failures.len())),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// Orthonormal basis of the span of `vectors`.
fn orthonormalize(vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &out {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
        let n = w.norm();
        if n > 1e-12 {
            out.push(w / n);
        }
    }
    out
}

/// Minimizes `|z(s) - x|` with `z(s) = x + Σ s_k dirs_k` over a uniform grid
/// in `s`, halving the spacing around the best grid point until it reaches
/// `resolution`. Grid points count as members when `violation <= h`; while
/// none is, the least violating point is the zoom center. Returns the best
/// point of the finest level and its violation.
fn grid_search(
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    violation: &dyn Fn(&DVector<f64>) -> f64,
    radius: f64,
    resolution: f64,
) -> (DVector<f64>, f64) {
    const HALF: i64 = 10;
    let d = dirs.len();
    let point = |s: &[f64]| {
        let mut z = x.clone();
        for (sk, dk) in s.iter().zip(dirs) {
            z.axpy(*sk, dk, 1.0);
        }
        z
    };
    let mut center = vec![0.0; d];
    let mut h = radius / HALF as f64;
    loop {
        let side = (2 * HALF + 1) as usize;
        let mut idx = vec![0usize; d];
        // Key: (infeasible, violation or distance).
        let mut best: Option<((bool, f64), Vec<f64>)> = None;
        'grid: loop {
            let s: Vec<f64> = idx.iter().zip(&center).map(|(i, c)| c + (*i as i64 - HALF) as f64 * h).collect();
            let z = point(&s);
            let v = violation(&z);
            let key = if v <= h { (false, (&z - x).norm_squared()) } else { (true, v) };
            if best.as_ref().is_none_or(|b| key < b.0) {
                best = Some((key, s));
            }
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < side {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
        center = best.map(|b| b.1).unwrap_or(center);
        if h <= resolution {
            let z = point(&center);
            let v = violation(&z);
            return (z, v);
        }
        h = (h / 2.0).max(resolution);
    }
}

/// Compares a claimed projection `p` of `x` onto a convex set `C` with a
/// grid point `g` within `hc` of `C`. For the true projection,
/// `|z - x|^2 - |p - x|^2 >= |z - p|^2` for all `z` in `C`, and a grid point
/// within `reach` of `p` exists.
fn compare_with_grid(x: &DVector<f64>, p: &DVector<f64>, g: &DVector<f64>, reach: f64, hc: f64) -> Result<(), String> {
    let fp = (p - x).norm_squared();
    let fg = (g - x).norm_squared();
    let slack = 1e-9 * (1.0 + fp);
    let dp = fp.sqrt();
    if fg < fp - (2.0 * dp + hc) * hc - slack {
        return Err(format!("grid point is closer than the projection ({fg:e} < {fp:e})"));
    }
    if fg - fp > (2.0 * dp + reach) * reach + slack {
        return Err(format!("grid minimum {fg:e} far above projection value {fp:e}"));
    }
    let gap = (g - p).norm();
    let bound = hc + ((fg.sqrt() + hc).powi(2) - fp).max(0.0).sqrt() + 1e-6;
    if gap > bound {
        return Err(format!("grid minimizer {gap:e} away from the projection (bound {bound:e})"));
    }
    Ok(())
}

fn check_idempotent_and_descent(
    what: &str,
    x: &DVector<f64>,
    project: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(), String> {
    let p = project(x);
    let pp = project(&p);
    let tol = 1e-10 * (1.0 + x.norm());
    if (&pp - &p).norm() > tol {
        return Err(format!("{what}: not idempotent ({:e})", (&pp - &p).norm()));
    }
    for _ in 0..5 {
        let z = project(&random_vector(rng, x.len(), 4.0));
        let lhs = (&p - &z).norm_squared();
        let rhs = (x - &z).norm_squared() - (x - &p).norm_squared();
        if lhs > rhs + 1e-9 * (1.0 + (x - &z).norm_squared()) {
            return Err(format!("{what}: descent violated ({lhs:e} > {rhs:e})"));
        }
    }
    Ok(())
}

/// Every projection against a grid-search minimizer (spacing `resolution`),
/// plus idempotence and the descent property, on `instances` random cases in
/// dimensions 2 to 4.
pub fn geometry_oracle_suite(seed: u64, instances: usize, resolution: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut fail = |i: usize, what: &str, e: String| failures.push(format!("instance {i} {what}: {e}"));
    for i in 0..instances {
        let dim = 2 + i % 3;
        let x = random_vector(&mut rng, dim, 2.0);
        let u1 = random_vector(&mut rng, dim, 1.0) + DVector::from_element(dim, 0.2);
        // Well-separated normals keep the violation a faithful distance.
        let mut u2 = random_vector(&mut rng, dim, 1.0);
        while u2.dot(&u1).abs() > 0.8 * u1.norm() * u2.norm() {
            u2 = random_vector(&mut rng, dim, 1.0);
        }
        let a1: f64 = rng.random_range(-1.0..1.0);
        let a2: f64 = rng.random_range(-1.0..1.0);
        let xi = rng.random_range(0.0..0.5);
        let radius = x.norm() + a1.abs().max(a2.abs()) / u1.norm().min(u2.norm()) + 2.0;

        let plane = Hyperplane::new(u1.clone(), a1).expect("valid plane");
        let plane2 = Hyperplane::new(u2.clone(), a2).expect("valid plane");
        let half = HalfSpace::le(u1.clone(), a1).expect("valid half-space");
        let half2 = HalfSpace::le(u2.clone(), a2).expect("valid half-space");
        let stripe = Stripe::new(u1.clone(), a1, xi).expect("valid stripe");
        let planes = [plane.clone(), plane2.clone()];

        // Signed excess of each constraint in distance units.
        let e1 = |z: &DVector<f64>| (u1.dot(z) - a1) / u1.norm();
        let e2 = |z: &DVector<f64>| (u2.dot(z) - a2) / u2.norm();
        type Case<'a> = (
            &'static str,
            Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>,
            Box<dyn Fn(&DVector<f64>) -> f64 + 'a>,
            usize,
        );
        let cases: [Case; 5] = [
            (
                "hyperplane",
                Box::new(|v| project_hyperplane(v, &plane).expect("valid")),
                Box::new(|z| e1(z).abs()),
                1,
            ),
            (
                "half-space",
                Box::new(|v| project_halfspace(v, &half).expect("valid")),
                Box::new(|z| e1(z).max(0.0)),
                1,
            ),
            (
                "stripe",
                Box::new(|v| project_stripe(v, &stripe).expect("valid")),
                Box::new(|z| ((u1.dot(z) - a1).abs() - xi).max(0.0) / u1.norm()),
                1,
            ),
            (
                "intersection",
                Box::new(|v| project_hyperplane_intersection(v, &planes).expect("independent normals").point),
                Box::new(|z| e1(z).abs().max(e2(z).abs())),
                2,
            ),
            (
                "two half-spaces",
                Box::new(|v| project_two_halfspaces(v, &half, &half2).expect("independent normals")),
                Box::new(|z| e1(z).max(e2(z)).max(0.0)),
                2,
            ),
        ];
        // Moving orthogonally to every normal keeps membership, so the
        // minimizer lies in x + span(normals).
        let span1 = orthonormalize(std::slice::from_ref(&u1));
        let span2 = orthonormalize(&[u1.clone(), u2.clone()]);
        for (what, project, violation, k) in &cases {
            let dirs = if *k == 1 { &span1 } else { &span2 };
            let p = project(&x);
            if violation(&p) > 1e-9 * (1.0 + x.norm()) {
                fail(i, what, format!("projection violates the set by {:e}", violation(&p)));
            }
            let (g, _) = grid_search(&x, dirs, violation.as_ref(), radius, resolution);
            let reach = (*k as f64).sqrt() * resolution;
            if let Err(e) = compare_with_grid(&x, &p, &g, reach, 10.0 * resolution) {
                fail(i, what, e);
            }
            if let Err(e) = check_idempotent_and_descent(what, &x, project.as_ref(), &mut rng) {
                fail(i, what, e);
            }
        }
    }
    Check::from_failures(
        "geometry oracles",
        failures,
        format!("{instances} instances x 5 projections, grid spacing {resolution:e}"),
    )
}

/// The coefficients returned for an intersection of `N <= 5` hyperplanes
/// zero the gradient of the dual objective.
pub fn intersection_stationarity(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for i in 0..instances {
        let n = 1 + i % 5;
        let dim = n + rng.random_range(0..4);
        let x = random_vector(&mut rng, dim, 3.0);
        let planes: Vec<Hyperplane> = (0..n)
            .map(|_| {
                let mut u = random_vector(&mut rng, dim, 1.0);
                if u.norm() < 0.1 {
                    u[0] += 1.0;
                }
                Hyperplane::new(u, rng.random_range(-2.0..2.0)).expect("nonzero normal")
            })
            .collect();
        match project_hyperplane_intersection(&x, &planes) {
            Ok(p) => {
                let grad = intersection_objective_gradient(&x, &planes, &p.coefficients).amax();
                let rel = grad / (1.0 + x.norm());
                worst = worst.max(rel);
                if rel > 1e-8 {
                    failures.push(format!("instance {i}: gradient {grad:e}"));
                }
            }
            // Nearly dependent random normals are legitimately rejected.
            Err(crate::geometry::GeometryError::RankDeficient { .. }) => {}
            Err(e) => failures.push(format!("instance {i}: {e}")),
        }
    }
    Check::from_failures(
        "intersection stationarity",
        failures,
        format!("{instances} instances, worst |∇h| / (1 + |x|) = {worst:.2e}"),
    )
}

/// Stored energy and stress at the identity, stress against finite
/// differences of the energy near the identity, and the reference constants.
pub fn material_checks(seed: u64) -> Check {
    let m = MaterialModel::reference();
    let mut failures = Vec::new();
    let id = Matrix3::identity();
    let e0 = neo_hookean_energy(&id, &m).unwrap_or(f64::NAN);
    let p0 = first_piola_reference(&id, &m).unwrap_or(Matrix3::from_element(f64::NAN));
    if e0 != 0.0 {
        failures.push(format!("energy at identity {e0:e}"));
    }
    if p0 != Matrix3::zeros() {
        failures.push(format!("stress at identity {:e}", p0.amax()));
    }
    if (m.beta() - 0.9699).abs() > 5e-5 {
        failures.push(format!("beta = {}", m.beta()));
    }
    if m.c() != m.mu / 2.0 {
        failures.push(format!("c = {}", m.c()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for s in 0..50 {
        let y = id + Matrix3::from_fn(|_, _| 0.1 * (2.0 * rng.random::<f64>() - 1.0));
        let Ok(p) = first_piola_reference(&y, &m) else {
            failures.push(format!("sample {s}: stress failed"));
            continue;
        };
        let h = 1e-5;
        for r in 0..3 {
            for c in 0..3 {
                let mut yp = y;
                let mut ym = y;
                yp[(r, c)] += h;
                ym[(r, c)] -= h;
                let fd = (neo_hookean_energy(&yp, &m).unwrap_or(f64::NAN)
                    - neo_hookean_energy(&ym, &m).unwrap_or(f64::NAN))
                    / (2.0 * h);
                let rel = (fd - p[(r, c)]).abs() / p.amax().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                if !(rel <= 1e-6) {
                    failures.push(format!("sample {s} entry ({r},{c}): relative error {rel:e}"));
                }
            }
        }
    }
    Check::from_failures(
        "material model",
        failures,
        format!("beta = {:.4}, c = mu/2, worst stress FD error {worst:.1e}", m.beta()),
    )
}

/// Identity operator on `R^10`: RESESOP with exact data solves in one step,
/// Landweber with `ω = 1/2` needs at least 20 steps to reach `1e-6` from
/// `|x0 - x*| = 1`.
pub fn linear_fixture_checks() -> Check {
    let op = LinearOperator::identity(10);
    let y = DVector::zeros(10);
    let mut x0 = DVector::from_element(10, 1.0);
    x0 /= x0.norm();
    let mut failures = Vec::new();
    let cfg = SolverConfig::new(0.0, 0.0).and_then(|c| c.with_max_iterations(100));
    let Ok(cfg) = cfg else {
        return Check::new("linear fixture", false, "invalid configuration");
    };
    let options = RunOptions {
        truth: Some(y.clone()),
        assert_fejer: true,
    };
    let resesop = run_solver(Method::Resesop, &op, &y, &x0, &cfg, &options);
    match &resesop {
        Ok(run) if run.iterations() == 1 && run.final_residual() == 0.0 => {}
        Ok(run) => failures.push(format!(
            "RESESOP took {} iterations to residual {:e}",
            run.iterations(),
            run.final_residual()
        )),
        Err(e) => failures.push(format!("RESESOP: {e}")),
    }
    // Stopping at |R| <= τ δ = 1e-6.
    let lw_cfg = SolverConfig::new(0.0, 1e-6 / 1.01).and_then(|c| c.with_omega(0.5)).and_then(|c| c.with_max_iterations(200));
    let landweber = lw_cfg.map_err(|e| e.to_string()).and_then(|c| {
        run_solver(Method::Landweber, &op, &y, &x0, &c, &options).map_err(|e| e.to_string())
    });
    let lw_iters = match &landweber {
        Ok(run) => {
            if run.iterations() < 20 || run.reason != StoppingReason::DiscrepancySatisfied {
                failures.push(format!("Landweber stopped after {} iterations ({})", run.iterations(), run.reason));
            }
            let geometric = run
                .records
                .iter()
                .all(|r| (r.residual_norm - 0.5f64.powi(r.index as i32)).abs() < 1e-14);
            if !geometric {
                failures.push("Landweber residuals are not 2^-n".into());
            }
            run.iterations()
        }
        Err(e) => {
            failures.push(format!("Landweber: {e}"));
            0
        }
    };
    Check::from_failures(
        "linear fixture",
        failures,
        format!("RESESOP 1 step, Landweber {lw_iters} steps to 1e-6"),
    )
}

/// RESESOP on a noisy well-conditioned linear problem with the Fejér
/// assertion on; step positivity and stripe membership are asserted inside
/// every step.
pub fn resesop_invariants(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(12, 8, |i, j| if i == j { 2.0 } else { 0.0 } + 0.3 * (2.0 * rng.random::<f64>() - 1.0));
    let op = LinearOperator::new(a.clone());
    let truth = random_vector(&mut rng, 8, 0.5).add_scalar(1.0);
    let y = &a * &truth;
    let delta = 1e-3 * y.norm();
    let noise = random_vector(&mut rng, 12, 1.0);
    let y_delta = &y + &noise * (delta / noise.norm());
    let mut failures = Vec::new();
    let mut summary = String::new();
    for k in [1, 3] {
        let cfg = SolverConfig::new(0.0, delta)
            .and_then(|c| c.with_search_directions(k))
            .and_then(|c| c.with_max_iterations(2000));
        let options = RunOptions {
            truth: Some(truth.clone()),
            assert_fejer: true,
        };
        let x0 = DVector::zeros(8);
        match cfg.map_err(|e| e.to_string()).and_then(|c| {
            run_solver(Method::Resesop, &op, &y_delta, &x0, &c, &options).map_err(|e| e.to_string())
        }) {
            Ok(run) => {
                if run.reason != StoppingReason::DiscrepancySatisfied {
                    failures.push(format!("{k} direction(s): stopped by {}", run.reason));
                }
                if run.records.iter().rev().skip(1).any(|r| r.step_coefficient().is_none_or(|t| t <= 0.0)) {
                    failures.push(format!("{k} direction(s): nonpositive step"));
                }
                summary += &format!("{k} direction(s): {} steps; ", run.iterations());
            }
            Err(e) => failures.push(format!("{k} direction(s): {e}")),
        }
    }
    Check::from_failures("RESESOP step invariants", failures, summary.trim_end_matches("; ").to_string())
}

/// `<F'h, w> = <h, F'^* w>` for both adjoint evaluations on `pairs` random
/// pairs, relative to `|F'h| |w|`.
pub fn adjoint_identity(problem: &ForwardProblem, pairs: usize, seed: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.dictionary_size();
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    for mode in [AdjointMode::Sweep, AdjointMode::Columnwise] {
        let op = PlateOperator::new(problem.clone()).with_adjoint_mode(mode);
        let alpha = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        for p in 0..pairs {
            let h = random_vector(&mut rng, n, 1.0);
            let w = random_vector(&mut rng, op.data_dim(), 1.0);
            let result = op
                .derivative_apply(&alpha, &h)
                .and_then(|jh| Ok((jh.clone(), op.adjoint_apply(&alpha, &w)?)));
            match result {
                Ok((jh, jtw)) => {
                    let lhs = jh.dot(&w);
                    let rhs = h.dot(&jtw);
                    let rel = (lhs - rhs).abs() / (jh.norm() * w.norm()).max(f64::MIN_POSITIVE);
                    worst = worst.max(rel);
                    if !(rel <= tol) {
                        failures.push(format!("{mode:?} pair {p}: relative gap {rel:e}"));
                    }
                }
                Err(e) => failures.push(format!("{mode:?} pair {p}: {e}")),
            }
        }
    }
    Check::from_failures(
        "adjoint identity",
        failures,
        format!("{pairs} pairs per adjoint mode, worst relative gap {worst:.1e}"),
    )
}

/// Analytic derivative against the central-difference Jacobian, column by
/// column, plus the observed order of the difference error on an `ε` sweep.
pub fn derivative_check(problem: &ForwardProblem, alpha: &DVector<f64>, eps: f64, sweep: &[f64], tol: f64) -> Check {
    let op = PlateOperator::new(problem.clone());
    let mut failures = Vec::new();
    let analytic = match op.jacobian(alpha) {
        Ok(j) => j,
        Err(e) => return Check::new("derivative", false, e.to_string()),
    };
    let fd = match fd_jacobian_oracle(&op, alpha, eps) {
        Ok(j) => j,
        Err(e) => return Check::new("derivative", false, e.to_string()),
    };
    let mut worst = 0.0_f64;
    for k in 0..alpha.len() {
        let a = analytic.0.column(k);
        let rel = (a - fd.0.column(k)).norm() / a.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if !(rel <= tol) {
            failures.push(format!("column {k}: relative error {rel:e}"));
        }
    }

    // Order of the difference error on the direction of all ones, where the
    // response is strongest.
    let dir = DVector::from_element(alpha.len(), 1.0 / (alpha.len() as f64).sqrt());
    let exact = analytic.apply(&dir);
    let mut errors = Vec::new();
    for &e in sweep {
        let r = op
            .apply(&(alpha + &dir * e))
            .and_then(|p| Ok((p, op.apply(&(alpha - &dir * e))?)));
        match r {
            Ok((p, m)) => errors.push(((p - m) / (2.0 * e) - &exact).norm() / exact.norm()),
            Err(err) => {
                failures.push(format!("sweep at eps {e}: {err}"));
                break;
            }
        }
    }
    let orders: Vec<f64> = errors
        .windows(2)
        .zip(sweep.windows(2))
        .map(|(er, ep)| (er[0] / er[1]).ln() / (ep[0] / ep[1]).ln())
        .collect();
    if orders.is_empty() || orders.iter().any(|o| !(*o > 1.8)) {
        failures.push(format!("difference error orders {orders:.2?} (errors {errors:?})"));
    }
    Check::from_failures(
        "derivative vs finite differences",
        failures,
        format!("{} columns, worst relative error {worst:.1e}, eps-sweep orders {orders:.2?}", alpha.len()),
    )
}

/// Displacement at the final time for a step count, with the time span held
/// fixed.
fn final_displacement(problem: &ForwardProblem, theta: f64, steps: usize) -> Result<DVector<f64>, String> {
    let base = problem.integrator();
    let cfg = crate::forward::TimeIntegratorConfig {
        theta,
        dt: base.t_end() / steps as f64,
        steps,
        ..*base
    };
    let p = problem.with_integrator(cfg).map_err(|e| e.to_string())?;
    let field = p.solve(&CoefficientField::Constant(1.0)).map_err(|e| e.to_string())?;
    Ok(field.displacements.last().cloned().unwrap_or_default())
}

/// Observed temporal orders `log2(e(Δt) / e(Δt/2))` of the final
/// displacement against a reference run `reference_factor` times finer than
/// the finest level.
pub fn time_convergence_orders(
    problem: &ForwardProblem,
    theta: f64,
    base_steps: usize,
    levels: usize,
    reference_factor: usize,
) -> Result<Vec<f64>, String> {
    let finest = base_steps << (levels - 1);
    let reference = final_displacement(problem, theta, finest * reference_factor)?;
    let errors = (0..levels)
        .map(|l| Ok((final_displacement(problem, theta, base_steps << l)? - &reference).norm()))
        .collect::<Result<Vec<f64>, String>>()?;
    Ok(errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect())
}

/// Rest state, homogeneous dictionary against the single energy, clamped
/// boundary, and temporal self-convergence for θ = 1 and θ = 1/2.
pub fn forward_sanity(problem: &ForwardProblem, base_steps: usize, levels: usize) -> Check {
    let mut failures = Vec::new();
    let mut details = Vec::new();
    let mesh = problem.mesh();

    let silent = problem.with_excitation(ExcitationSpec {
        amplitude: 0.0,
        ..*problem.excitation()
    });
    match silent.and_then(|p| p.solve(&CoefficientField::Constant(1.0))) {
        Ok(f) => {
            if f.displacements.iter().any(|u| u.iter().any(|v| *v != 0.0)) {
                failures.push("rest state moved without load".into());
            }
        }
        Err(e) => failures.push(format!("rest state: {e}")),
    }

    let dict = CoefficientField::Dictionary(DictionaryField::homogeneous(mesh));
    match (problem.solve(&CoefficientField::Constant(1.0)), problem.solve(&dict)) {
        (Ok(a), Ok(b)) => {
            let gap = a
                .displacements
                .iter()
                .zip(&b.displacements)
                .map(|(x, y)| (x - y).amax())
                .fold(0.0, f64::max);
            let scale = a.displacements.iter().map(|x| x.amax()).fold(0.0, f64::max);
            if gap > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                failures.push(format!("homogeneous dictionary differs by {gap:e}"));
            }
            let clamped_zero = (0..a.levels()).all(|l| {
                a.nodal_values(mesh, l)
                    .iter()
                    .enumerate()
                    .all(|(node, u)| !mesh.is_dirichlet(node) || *u == [0.0; 3])
            });
            if !clamped_zero {
                failures.push("nonzero displacement on a clamped node".into());
            }
            details.push(format!("dictionary gap {gap:.1e}"));
        }
        (Err(e), _) | (_, Err(e)) => failures.push(format!("homogeneous solve: {e}")),
    }

    for (theta, required) in [(1.0, 0.9), (0.5, 1.9)] {
        match time_convergence_orders(problem, theta, base_steps, levels, 8) {
            Ok(orders) => {
                let observed = orders.last().copied().unwrap_or(f64::NAN);
                if !(observed >= required) {
                    failures.push(format!("theta {theta}: orders {orders:.2?} below {required}"));
                }
                details.push(format!("theta {theta} orders {orders:.2?}"));
            }
            Err(e) => failures.push(format!("theta {theta}: {e}")),
        }
    }
    Check::from_failures("forward solver sanity", failures, details.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormalize_spans_inputs() {
        let u = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let v = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0]);
        let b = orthonormalize(&[u.clone(), v.clone()]);
        assert_eq!(b.len(), 2);
        assert!(b[0].dot(&b[1]).abs() < 1e-12);
        for w in [&u, &v] {
            let rest = w - &b[0] * b[0].dot(w) - &b[1] * b[1].dot(w);
            assert!(rest.norm() < 1e-12);
        }
    }

    #[test]
    fn grid_search_finds_disk_projection() {
        // Projection of (3, 0) onto the unit disk is (1, 0).
        let x = DVector::from_vec(vec![3.0, 0.0]);
        let axes = orthonormalize(&[DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])]);
        let (g, v) = grid_search(&x, &axes, &|z| (z.norm() - 1.0).max(0.0), 5.0, 1e-3);
        assert!(v <= 1e-3);
        assert!((g - DVector::from_vec(vec![1.0, 0.0])).norm() < 5e-2);
    }

    #[test]
    fn fast_suites_pass() {
        for check in [
            geometry_oracle_suite(1, 15, 1e-3),
            intersection_stationarity(2, 40),
            material_checks(3),
            linear_fixture_checks(),
            resesop_invariants(4),
        ] {
            assert!(check.passed, "{check}");
        }
    }

    #[test]
    fn wrong_projection_is_caught() {
        let x = DVector::from_vec(vec![2.0, 1.0]);
        let p = DVector::from_vec(vec![0.5, 1.0]);
        let g = DVector::from_vec(vec![1.0, 0.0]);
        assert!(compare_with_grid(&x, &p, &g, 1e-3, 1e-2).is_err());
    }
}
