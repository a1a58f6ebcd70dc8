//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns JSON text, so the page needs
//! no generated TypeScript types. The `*_json` functions are ordinary Rust and
//! are tested natively.

use hyperid::experiments::{add_noise, build_scenario, run_experiment, NoiseModel, Overrides};
use hyperid::geometry::{project_stripe, Stripe};
use hyperid::solvers::{run_solver, LinearOperator, Method, RunOptions, SolverConfig};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Projection of `(x, y)` onto the stripe `|<n, p> - offset| <= halfwidth`
/// with normal at `angle` radians. Returns `[px, py]`.
pub fn stripe_projection(x: f64, y: f64, angle: f64, offset: f64, halfwidth: f64) -> Result<[f64; 2], String> {
    let normal = DVector::from_vec(vec![angle.cos(), angle.sin()]);
    let stripe = Stripe::new(normal, offset, halfwidth).map_err(|e| e.to_string())?;
    let p = project_stripe(&DVector::from_vec(vec![x, y]), &stripe).map_err(|e| e.to_string())?;
    Ok([p[0], p[1]])
}

#[derive(Serialize)]
struct Curve {
    method: String,
    iterations: usize,
    reason: String,
    residuals: Vec<f64>,
    errors: Vec<f64>,
    solution: Vec<f64>,
}

#[derive(Serialize)]
struct LinearComparison {
    delta: f64,
    tau: f64,
    truth: Vec<f64>,
    curves: Vec<Curve>,
}

/// Gaussian blur on `n` points of `[0, 1]`: a mildly ill-posed linear
/// problem whose truth is a bump on a unit background.
fn blur_problem(n: usize, width: f64) -> (LinearOperator, DVector<f64>) {
    let h = 1.0 / (n - 1) as f64;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64) * h;
        h * (-d * d / (2.0 * width * width)).exp() / (width * (2.0 * std::f64::consts::PI).sqrt())
    });
    let truth = DVector::from_fn(n, |i, _| {
        let t = i as f64 * h;
        1.0 + 2.0 * (-((t - 0.35) / 0.08).powi(2)).exp() + (-((t - 0.7) / 0.05).powi(2)).exp()
    });
    (LinearOperator::new(a), truth)
}

/// Landweber and RESESOP on the same noisy blur data.
pub fn linear_comparison_json(
    n: usize,
    relative_noise: f64,
    directions: usize,
    max_iterations: usize,
    seed: u64,
) -> Result<String, String> {
    if !(8..=400).contains(&n) {
        return Err(format!("n = {n} must lie in 8..=400"));
    }
    let (op, truth) = blur_problem(n, 0.03);
    let exact = op.matrix() * &truth;
    let delta = relative_noise * exact.norm();
    let data = add_noise(&exact, &NoiseModel { seed, delta });
    let cfg = SolverConfig::new(0.0, delta)
        .and_then(|c| c.with_max_iterations(max_iterations))
        .and_then(|c| c.with_search_directions(directions))
        .map_err(|e| e.to_string())?;
    let options = RunOptions {
        truth: Some(truth.clone()),
        assert_fejer: false,
    };
    let x0 = DVector::from_element(n, 1.0);
    let mut curves = Vec::new();
    for method in [Method::Landweber, Method::Resesop] {
        let run = run_solver(method, &op, &data, &x0, &cfg, &options).map_err(|e| e.to_string())?;
        curves.push(Curve {
            method: method.to_string(),
            iterations: run.iterations(),
            reason: run.reason.to_string(),
            residuals: run.records.iter().map(|r| r.residual_norm).collect(),
            errors: run.records.iter().filter_map(|r| r.error_to_truth).collect(),
            solution: run.x.iter().copied().collect(),
        });
    }
    let out = LinearComparison {
        delta,
        tau: cfg.tau,
        truth: truth.iter().copied().collect(),
        curves,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PlateResult {
    rows: usize,
    cols: usize,
    alpha: Vec<f64>,
    truth: Vec<f64>,
    residuals: Vec<f64>,
    iterations: usize,
    reason: String,
}

/// Inverts synthetic data of a small plate with one damaged coefficient at
/// `(i, j)` on a `knots x knots` surface grid.
pub fn plate_inversion_json(
    knots: usize,
    i: usize,
    j: usize,
    value: f64,
    method: &str,
    relative_noise: f64,
    max_iterations: usize,
) -> Result<String, String> {
    if !(4..=9).contains(&knots) {
        return Err(format!("knots = {knots} must lie in 4..=9"));
    }
    let mut o = Overrides::new();
    let settings = [
        ("surface_knots", knots.to_string()),
        ("thickness_knots", "2".into()),
        ("steps", "8".into()),
        ("damage", format!("{i},{j},{value}")),
        ("method", method.into()),
        ("relative_noise", relative_noise.to_string()),
        ("max_iterations", max_iterations.to_string()),
    ];
    for (k, v) in settings {
        o.set(k, v).map_err(|e| e.to_string())?;
    }
    let spec = build_scenario("custom", &o).map_err(|e| e.to_string())?;
    let report = run_experiment(&spec).map_err(|e| e.to_string())?;
    let out = PlateResult {
        rows: report.alpha_final.n_rows,
        cols: report.alpha_final.n_cols,
        alpha: report.alpha_final.coefficients.iter().copied().collect(),
        truth: report.truth.coefficients.iter().copied().collect(),
        residuals: report.residuals(),
        iterations: report.iterations,
        reason: report.reason.to_string(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = projectStripe)]
pub fn project_stripe_js(x: f64, y: f64, angle: f64, offset: f64, halfwidth: f64) -> Result<Vec<f64>, JsError> {
    stripe_projection(x, y, angle, offset, halfwidth)
        .map(|p| p.to_vec())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = compareLinear)]
pub fn compare_linear_js(
    n: usize,
    relative_noise: f64,
    directions: usize,
    max_iterations: usize,
    seed: u32,
) -> Result<String, JsError> {
    linear_comparison_json(n, relative_noise, directions, max_iterations, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = invertPlate)]
pub fn invert_plate_js(
    knots: usize,
    i: usize,
    j: usize,
    value: f64,
    method: &str,
    relative_noise: f64,
    max_iterations: usize,
) -> Result<String, JsError> {
    plate_inversion_json(knots, i, j, value, method, relative_noise, max_iterations).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn projection_lands_on_the_near_boundary() {
        let p = stripe_projection(3.0, 5.0, 0.0, 1.0, 0.5).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-15 && p[1] == 5.0);
        assert_eq!(stripe_projection(1.2, -2.0, 0.0, 1.0, 0.5).unwrap(), [1.2, -2.0]);
        assert!(stripe_projection(0.0, 0.0, 0.3, 0.0, -1.0).is_err());
    }

    #[test]
    fn resesop_stops_before_landweber() {
        let v: Value = serde_json::from_str(&linear_comparison_json(60, 0.01, 1, 5000, 1).unwrap()).unwrap();
        let curves = v["curves"].as_array().unwrap();
        let iters: Vec<u64> = curves.iter().map(|c| c["iterations"].as_u64().unwrap()).collect();
        for c in curves {
            assert_eq!(c["reason"], "discrepancy_satisfied");
        }
        assert!(iters[1] < iters[0], "{iters:?}");
    }

    #[test]
    fn plate_inversion_reports_a_grid() {
        let text = plate_inversion_json(5, 2, 2, 3.0, "resesop", 0.01, 40).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["rows"], 5);
        assert_eq!(v["alpha"].as_array().unwrap().len(), 25);
        assert_eq!(v["truth"][2 * 5 + 2], 3.0);
        assert!(plate_inversion_json(12, 2, 2, 3.0, "resesop", 0.01, 10).is_err());
    }
}
