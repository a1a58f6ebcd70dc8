//! Iterative regularization: attenuated Landweber and RESESOP (regularizing
//! sequential subspace optimization) with the discrepancy principle.
//!
//! Both methods move along `u_n = F'(x_n)^* R_n`, `R_n = F(x_n) - y^δ`.
//! Landweber uses a fixed damping `ω`. RESESOP projects `x_n` onto the stripe
//!
//! ```text
//! H_n = { x : |<u_n, x> - α_n| <= ξ_n },
//! α_n = <u_n, x_n> - |R_n|^2,
//! ξ_n = |R_n| (δ + c_tc (|R_n| + δ)),
//! ```
//!
//! which contains every solution under the tangential cone condition. The
//! projection lands on the upper bounding hyperplane and yields the step
//! `(|R_n|^2 - ξ_n) / |u_n|^2`.

mod config;
mod operator;

use std::collections::VecDeque;
use web_time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Stripe};

pub use config::{
    default_tau, tau_lower_bound, Method, SolverConfig, DEFAULT_CTC, OMEGA_SAFETY,
};
pub use operator::{ForwardOperator, LinearOperator, OperatorError};

/// Relative tolerance for stripe membership checks after a step.
pub const MEMBERSHIP_RTOL: f64 = 1e-9;

/// `|u_n| < STAGNATION_TOL (1 + |x_n|)` ends the run.
pub const STAGNATION_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration {iteration}: {source}")]
    Operator {
        iteration: usize,
        #[source]
        source: OperatorError,
    },
    #[error("iteration {iteration}: {source}")]
    Geometry {
        iteration: usize,
        #[source]
        source: GeometryError,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("search direction vanished with nonzero residual (|u| = {norm:e})")]
    Stagnation { norm: f64 },
    #[error("iteration {iteration}: invariant violated: {what}")]
    InvariantViolated { iteration: usize, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingReason {
    DiscrepancySatisfied,
    IterationLimit,
    Stagnation,
    DomainViolation,
}

impl std::fmt::Display for StoppingReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StoppingReason::DiscrepancySatisfied => "discrepancy_satisfied",
            StoppingReason::IterationLimit => "iteration_limit",
            StoppingReason::Stagnation => "stagnation",
            StoppingReason::DomainViolation => "domain_violation",
        })
    }
}

/// Offset and halfwidth of the stripe built at an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripeParams {
    pub offset: f64,
    pub halfwidth: f64,
}

/// One row of a run: the state at iterate `index` and the step taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub residual_norm: f64,
    pub stripe: Option<StripeParams>,
    /// Step length(s) along the search direction(s); empty for the final
    /// iterate.
    pub step: Vec<f64>,
    pub error_to_truth: Option<f64>,
    /// Number of coefficients clamped to zero after the step.
    pub clamped: usize,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

impl IterationRecord {
    fn at(index: usize, residual_norm: f64, error_to_truth: Option<f64>, wall_time: f64) -> Self {
        Self {
            index,
            residual_norm,
            stripe: None,
            step: Vec::new(),
            error_to_truth,
            clamped: 0,
            wall_time,
        }
    }

    pub fn step_coefficient(&self) -> Option<f64> {
        self.step.first().copied()
    }
}

/// `true` iff `|R| <= τ δ`.
pub fn discrepancy_stop(residual_norm: f64, tau: f64, delta: f64) -> bool {
    residual_norm <= tau * delta
}

/// `x_{n+1} = x_n + ω F'(x_n)^* (y^δ - F(x_n))`.
pub fn landweber_step<F: ForwardOperator + ?Sized>(
    x: &DVector<f64>,
    y_delta: &DVector<f64>,
    op: &F,
    omega: f64,
) -> Result<DVector<f64>, OperatorError> {
    let misfit = y_delta - op.apply(x)?;
    let direction = op.adjoint_apply(x, &misfit)?;
    Ok(x + direction * omega)
}

/// RESESOP stripe `H(u_n, α_n, ξ_n)` from the residual `R_n = F(x_n) - y^δ`.
///
/// A vanishing `u_n` with nonzero residual is reported as
/// [`SolverError::Stagnation`]; with zero residual the (degenerate) stripe
/// is represented with `u_n = 0` by the caller not stepping at all, so this
/// also returns `Stagnation`.
pub fn compute_resesop_stripe<F: ForwardOperator + ?Sized>(
    x: &DVector<f64>,
    residual: &DVector<f64>,
    op: &F,
    ctc: f64,
    delta: f64,
) -> Result<Stripe, SolverError> {
    let u = op
        .adjoint_apply(x, residual)
        .map_err(|source| SolverError::Operator {
            iteration: 0,
            source,
        })?;
    stripe_from_direction(x, residual.norm(), u, ctc, delta)
}

fn stripe_from_direction(
    x: &DVector<f64>,
    residual_norm: f64,
    u: DVector<f64>,
    ctc: f64,
    delta: f64,
) -> Result<Stripe, SolverError> {
    let norm = u.norm();
    if norm < STAGNATION_TOL * (1.0 + x.norm()) {
        return Err(SolverError::Stagnation { norm });
    }
    let offset = u.dot(x) - residual_norm * residual_norm;
    let halfwidth = residual_norm * (delta + ctc * (residual_norm + delta));
    Stripe::new(u, offset, halfwidth).map_err(|source| SolverError::Geometry {
        iteration: 0,
        source,
    })
}

fn check_upper_membership(
    iteration: usize,
    x: &DVector<f64>,
    stripe: &Stripe,
) -> Result<(), SolverError> {
    let u = stripe.normal();
    let bound = stripe.offset() + stripe.halfwidth();
    let gap = u.dot(x) - bound;
    let scale = bound.abs() + u.norm() * x.norm() + stripe.halfwidth();
    if gap.abs() > MEMBERSHIP_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(SolverError::InvariantViolated {
            iteration,
            what: format!("iterate is off the upper stripe boundary by {gap:e}"),
        });
    }
    Ok(())
}

/// Single-direction RESESOP projection of `x_n` onto its own stripe.
/// Returns the new iterate and the step length along `-u_n`.
fn resesop_project(
    iteration: usize,
    x: &DVector<f64>,
    residual_norm: f64,
    stripe: &Stripe,
) -> Result<(DVector<f64>, f64), SolverError> {
    let u = stripe.normal();
    let step = (residual_norm * residual_norm - stripe.halfwidth()) / u.norm_squared();
    if !(step > 0.0) {
        return Err(SolverError::InvariantViolated {
            iteration,
            what: format!("non-positive RESESOP step length {step:e}"),
        });
    }
    let next = geometry::project_stripe(x, stripe)
        .map_err(|source| SolverError::Geometry { iteration, source })?;
    check_upper_membership(iteration, &next, stripe)?;
    Ok((next, step))
}

/// One RESESOP iteration with a single search direction.
///
/// Requires `|R_n| > τ δ`; at or below the discrepancy level the caller
/// must stop instead.
pub fn resesop_step<F: ForwardOperator + ?Sized>(
    x: &DVector<f64>,
    y_delta: &DVector<f64>,
    op: &F,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, IterationRecord), SolverError> {
    let op_err = |source| SolverError::Operator {
        iteration: 0,
        source,
    };
    let residual = op.apply(x).map_err(op_err)? - y_delta;
    let residual_norm = residual.norm();
    if discrepancy_stop(residual_norm, cfg.tau, cfg.delta) {
        return Err(SolverError::Precondition(format!(
            "|R| = {residual_norm:e} <= tau * delta = {:e}",
            cfg.tau * cfg.delta
        )));
    }
    let u = op.adjoint_apply(x, &residual).map_err(op_err)?;
    let stripe = stripe_from_direction(x, residual_norm, u, cfg.ctc, cfg.delta)?;
    let (next, step) = resesop_project(0, x, residual_norm, &stripe)?;
    let mut record = IterationRecord::at(0, residual_norm, None, 0.0);
    record.stripe = Some(StripeParams {
        offset: stripe.offset(),
        halfwidth: stripe.halfwidth(),
    });
    record.step = vec![step];
    Ok((next, record))
}

/// A past iterate kept for multi-direction RESESOP. The weight `w_i = R_i`
/// is frozen, so the stripe built from it never changes.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub stripe: Stripe,
}

impl HistoryEntry {
    /// Builds the stripe of `x_i` from its residual `R_i`.
    pub fn new<F: ForwardOperator + ?Sized>(
        x: DVector<f64>,
        residual: &DVector<f64>,
        op: &F,
        ctc: f64,
        delta: f64,
    ) -> Result<Self, SolverError> {
        let stripe = compute_resesop_stripe(&x, residual, op, ctc, delta)?;
        Ok(Self {
            residual_norm: residual.norm(),
            x,
            stripe,
        })
    }
}

/// Ring buffer of the most recent iterates, newest first.
#[derive(Debug, Clone)]
pub struct SearchHistory {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl SearchHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front(entry);
    }

    /// Newest first.
    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sequential projection onto the current stripe and then onto older stripes,
/// most recent first. When an older stripe is violated, the point is projected
/// onto the intersection of that stripe's violated bound and the current
/// stripe's upper bound, so the current stripe is not left behind.
fn project_multi(
    iteration: usize,
    x: &DVector<f64>,
    residual_norm: f64,
    current: &Stripe,
    older: &[&Stripe],
) -> Result<(DVector<f64>, Vec<f64>), SolverError> {
    let geo = |source| SolverError::Geometry { iteration, source };
    let (mut z, first) = resesop_project(iteration, x, residual_norm, current)?;
    let mut steps = vec![first];
    let upper = current.upper();
    for stripe in older {
        let Some(bound) = stripe.violated_bound(&z) else {
            steps.push(0.0);
            continue;
        };
        let before = z.clone();
        z = match geometry::project_two_halfspaces(&z, &upper, &bound) {
            Ok(p) => p,
            Err(GeometryError::InvalidGeometry(_)) => {
                geometry::project_stripe(&z, stripe).map_err(geo)?
            }
            Err(e) => return Err(geo(e)),
        };
        steps.push((&before - &z).norm() / stripe.normal().norm());
    }
    if !current.contains(&z) {
        z = geometry::project_stripe(&z, current).map_err(geo)?;
    }
    Ok((z, steps))
}

/// RESESOP with several search directions: the current stripe plus the
/// stripes of up to `search_directions - 1` stored iterates.
pub fn resesop_multi_step<F: ForwardOperator + ?Sized>(
    x: &DVector<f64>,
    y_delta: &DVector<f64>,
    op: &F,
    cfg: &SolverConfig,
    history: &SearchHistory,
) -> Result<(DVector<f64>, IterationRecord), SolverError> {
    let op_err = |source| SolverError::Operator {
        iteration: 0,
        source,
    };
    let residual = op.apply(x).map_err(op_err)? - y_delta;
    let residual_norm = residual.norm();
    if discrepancy_stop(residual_norm, cfg.tau, cfg.delta) {
        return Err(SolverError::Precondition(format!(
            "|R| = {residual_norm:e} <= tau * delta = {:e}",
            cfg.tau * cfg.delta
        )));
    }
    let u = op.adjoint_apply(x, &residual).map_err(op_err)?;
    let stripe = stripe_from_direction(x, residual_norm, u, cfg.ctc, cfg.delta)?;
    let older: Vec<&Stripe> = history
        .iter()
        .take(cfg.search_directions.saturating_sub(1))
        .map(|e| &e.stripe)
        .collect();
    let (next, steps) = project_multi(0, x, residual_norm, &stripe, &older)?;
    let mut record = IterationRecord::at(0, residual_norm, None, 0.0);
    record.stripe = Some(StripeParams {
        offset: stripe.offset(),
        halfwidth: stripe.halfwidth(),
    });
    record.step = steps;
    Ok((next, record))
}

/// Power-method estimate of `|F'(x0)|`: the largest `|F'(x0) v|` over the
/// normalized iterates of `v <- F'(x0)^* F'(x0) v`. The running maximum makes
/// the estimate nondecreasing in `iterations`.
pub fn estimate_operator_norm<F: ForwardOperator + ?Sized>(
    op: &F,
    x0: &DVector<f64>,
    iterations: usize,
) -> Result<f64, OperatorError> {
    let n = op.domain_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_c0de);
    let mut v = DVector::from_fn(n, |_, _| 1.0 + 0.5 * rng.random::<f64>());
    v /= v.norm();
    let mut best = 0.0_f64;
    for _ in 0..iterations.max(1) {
        let image = op.derivative_apply(x0, &v)?;
        best = best.max(image.norm());
        let back = op.adjoint_apply(x0, &image)?;
        let norm = back.norm();
        if norm == 0.0 {
            break;
        }
        v = back / norm;
    }
    Ok(best)
}

/// Extra checks and bookkeeping for [`run_solver`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Ground truth; enables `error_to_truth` in the records.
    pub truth: Option<DVector<f64>>,
    /// Fail the run if `|x* - x_n|` ever increases. Only meaningful for
    /// operators where every stripe contains the truth (linear, exact data
    /// within the noise level).
    pub assert_fejer: bool,
}

/// Outcome of [`run_solver`]; `records[n]` describes iterate `n`.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub method: Method,
    pub x: DVector<f64>,
    pub records: Vec<IterationRecord>,
    pub reason: StoppingReason,
    /// Damping actually used by Landweber.
    pub omega: Option<f64>,
    /// Operator failure that ended the run, if any.
    pub failure: Option<String>,
}

impl SolverRun {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.residual_norm)
    }
}

/// Iterates `method` from `x0` until the discrepancy principle, the iteration
/// limit, stagnation, or a domain violation stops it.
///
/// Operator failures (e.g. a forward solve that breaks down at a degenerate
/// coefficient vector) end the run with `DomainViolation`; the trajectory up
/// to that point is kept and the message stored in `failure`.
pub fn run_solver<F: ForwardOperator + ?Sized>(
    method: Method,
    op: &F,
    y_delta: &DVector<f64>,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    options: &RunOptions,
) -> Result<SolverRun, SolverError> {
    let cfg = cfg.clone().validated()?;
    if y_delta.len() != op.data_dim() {
        return Err(SolverError::Precondition(format!(
            "data has length {}, operator expects {}",
            y_delta.len(),
            op.data_dim()
        )));
    }
    if !op.in_domain(x0) {
        return Err(SolverError::Precondition(
            "starting point outside the operator domain".into(),
        ));
    }
    let omega = match (method, cfg.omega) {
        (Method::Landweber, Some(w)) => Some(w),
        (Method::Landweber, None) => {
            let c = estimate_operator_norm(op, x0, 30)
                .map_err(|source| SolverError::Operator {
                    iteration: 0,
                    source,
                })?;
            if c == 0.0 {
                return Err(SolverError::Precondition(
                    "derivative vanishes at the starting point".into(),
                ));
            }
            Some(OMEGA_SAFETY / (c * c))
        }
        (Method::Resesop, _) => None,
    };

    let start = Instant::now();
    let truth = options.truth.as_ref();
    let error_of = |x: &DVector<f64>| truth.map(|t| (t - x).norm());
    let mut history = SearchHistory::new(cfg.search_directions.saturating_sub(1));
    let mut records = Vec::new();
    let mut x = x0.clone();
    let mut n = 0;
    let mut failure = None;

    let reason = loop {
        let residual = match op.apply(&x) {
            Ok(fx) => fx - y_delta,
            Err(e) => {
                failure = Some(e.to_string());
                break StoppingReason::DomainViolation;
            }
        };
        let residual_norm = residual.norm();
        let error = error_of(&x);
        let mut record = IterationRecord::at(
            n,
            residual_norm,
            error,
            start.elapsed().as_secs_f64(),
        );

        if let (true, Some(prev), Some(cur)) = (
            options.assert_fejer,
            records.last().and_then(|r: &IterationRecord| r.error_to_truth),
            error,
        ) {
            if cur > prev * (1.0 + 1e-12) + 1e-15 {
                return Err(SolverError::InvariantViolated {
                    iteration: n,
                    what: format!("error to truth increased from {prev:e} to {cur:e}"),
                });
            }
        }

        if discrepancy_stop(residual_norm, cfg.tau, cfg.delta) {
            records.push(record);
            break StoppingReason::DiscrepancySatisfied;
        }
        if n == cfg.max_iterations {
            records.push(record);
            break StoppingReason::IterationLimit;
        }
        let u = match op.adjoint_apply(&x, &residual) {
            Ok(u) => u,
            Err(e) => {
                records.push(record);
                failure = Some(e.to_string());
                break StoppingReason::DomainViolation;
            }
        };
        if u.norm() < STAGNATION_TOL * (1.0 + x.norm()) {
            records.push(record);
            break StoppingReason::Stagnation;
        }

        let mut next = match method {
            Method::Landweber => {
                let w = omega.expect("landweber damping resolved above");
                record.step = vec![w];
                &x - &u * w
            }
            Method::Resesop => {
                let stripe = stripe_from_direction(&x, residual_norm, u, cfg.ctc, cfg.delta)
                    .map_err(|e| with_iteration(e, n))?;
                let older: Vec<&Stripe> = history.iter().map(|e| &e.stripe).collect();
                let (next, steps) = if older.is_empty() {
                    let (p, t) = resesop_project(n, &x, residual_norm, &stripe)?;
                    (p, vec![t])
                } else {
                    project_multi(n, &x, residual_norm, &stripe, &older)?
                };
                record.stripe = Some(StripeParams {
                    offset: stripe.offset(),
                    halfwidth: stripe.halfwidth(),
                });
                record.step = steps;
                history.push(HistoryEntry {
                    x: x.clone(),
                    residual_norm,
                    stripe,
                });
                next
            }
        };

        let negative = next.iter().filter(|v| **v < 0.0).count();
        if negative > 0 {
            if !cfg.clamp_nonnegative {
                records.push(record);
                break StoppingReason::DomainViolation;
            }
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            record.clamped = negative;
        }
        records.push(record);
        x = next;
        n += 1;
    };

    Ok(SolverRun {
        method,
        x,
        records,
        reason,
        omega,
        failure,
    })
}

fn with_iteration(e: SolverError, n: usize) -> SolverError {
    match e {
        SolverError::Operator { source, .. } => SolverError::Operator {
            iteration: n,
            source,
        },
        SolverError::Geometry { source, .. } => SolverError::Geometry {
            iteration: n,
            source,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn exact(ctc: f64) -> SolverConfig {
        SolverConfig::new(ctc, 0.0).unwrap()
    }

    #[test]
    fn landweber_examples() {
        let op = LinearOperator::identity(1);
        let x1 = landweber_step(&v(&[1.0]), &v(&[0.0]), &op, 0.5).unwrap();
        assert_eq!(x1, v(&[0.5]));
        let x1 = landweber_step(&v(&[1.0]), &v(&[0.0]), &op, 1.0).unwrap();
        assert_eq!(x1, v(&[0.0]));
        let x = v(&[0.3]);
        assert_eq!(landweber_step(&x, &x, &op, 0.7).unwrap(), x);
    }

    #[test]
    fn stripe_examples() {
        let op = LinearOperator::identity(2);
        let x = v(&[1.0, 0.0]);
        let s = compute_resesop_stripe(&x, &x, &op, 0.0, 0.0).unwrap();
        assert_eq!(s.normal(), &v(&[1.0, 0.0]));
        assert_eq!(s.offset(), 0.0);
        assert_eq!(s.halfwidth(), 0.0);

        let s = compute_resesop_stripe(&x, &v(&[0.5, 0.0]), &op, 0.1, 0.2).unwrap();
        assert_relative_eq!(s.halfwidth(), 0.5 * (0.2 + 0.1 * 0.7), epsilon = 1e-15);
        assert_relative_eq!(s.offset(), 0.5 - 0.25, epsilon = 1e-15);

        // Zero residual: stripe degenerates, nothing to project.
        assert!(matches!(
            compute_resesop_stripe(&x, &v(&[0.0, 0.0]), &op, 0.1, 0.0),
            Err(SolverError::Stagnation { .. })
        ));
    }

    #[test]
    fn resesop_step_examples() {
        let op = LinearOperator::identity(2);
        let (x1, rec) = resesop_step(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), &op, &exact(0.0)).unwrap();
        assert_eq!(x1, v(&[0.0, 0.0]));
        assert_eq!(rec.step, vec![1.0]);

        let cfg = SolverConfig::new(0.1, 0.1).unwrap();
        let err = resesop_step(&v(&[0.1, 0.0]), &v(&[0.0, 0.0]), &op, &cfg).unwrap_err();
        assert!(matches!(err, SolverError::Precondition(_)));
    }

    #[test]
    fn resesop_step_lands_on_upper_boundary() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 2.0, 0.3, 0.1]);
        let op = LinearOperator::new(a);
        let y = v(&[0.1, -0.3, 0.2]);
        let cfg = SolverConfig::new(0.2, 0.01).unwrap();
        let x = v(&[1.5, -0.7]);
        let residual = op.apply(&x).unwrap() - &y;
        let stripe = compute_resesop_stripe(&x, &residual, &op, cfg.ctc, cfg.delta).unwrap();
        let (x1, _) = resesop_step(&x, &y, &op, &cfg).unwrap();
        let bound = stripe.offset() + stripe.halfwidth();
        assert!((stripe.normal().dot(&x1) - bound).abs() < 1e-10 * (1.0 + bound.abs()));
        assert!(stripe.contains(&x1));
    }

    #[test]
    fn single_direction_multi_step_matches_single_step() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.0]);
        let op = LinearOperator::new(a);
        let y = v(&[0.5, 0.1]);
        let cfg = SolverConfig::new(0.1, 0.01).unwrap();
        let x = v(&[1.0, 1.0]);
        let mut history = SearchHistory::new(3);
        let r = op.apply(&v(&[2.0, -1.0])).unwrap() - &y;
        history.push(HistoryEntry::new(v(&[2.0, -1.0]), &r, &op, cfg.ctc, cfg.delta).unwrap());
        let (a1, _) = resesop_step(&x, &y, &op, &cfg).unwrap();
        let (b1, _) = resesop_multi_step(&x, &y, &op, &cfg, &history).unwrap();
        assert_eq!(a1, b1);
    }

    #[test]
    fn orthogonal_history_reaches_intersection() {
        // A = diag(1, 2), y = 0, x* = 0. The current stripe at (1, 1) has normal
        // (1, 4); the stored iterate (4, -1/4) has normal (4, -1).
        let op = LinearOperator::diagonal(&[1.0, 2.0]);
        let y = v(&[0.0, 0.0]);
        let cfg = exact(0.0).with_search_directions(2).unwrap();
        let xh = v(&[4.0, -0.25]);
        let rh = op.apply(&xh).unwrap();
        let mut history = SearchHistory::new(1);
        history.push(HistoryEntry::new(xh, &rh, &op, 0.0, 0.0).unwrap());
        assert_relative_eq!(history.iter().next().unwrap().stripe.normal(), &v(&[4.0, -1.0]));
        let (x1, _) = resesop_multi_step(&v(&[1.0, 1.0]), &y, &op, &cfg, &history).unwrap();
        assert_relative_eq!(x1, v(&[0.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn discrepancy_examples() {
        assert!(discrepancy_stop(0.19, 2.0, 0.1));
        assert!(!discrepancy_stop(0.3, 2.0, 0.1));
        assert!(discrepancy_stop(0.0, 2.0, 0.0));
        assert!(!discrepancy_stop(1e-300, 2.0, 0.0));
    }

    #[test]
    fn operator_norm_examples() {
        let op = LinearOperator::diagonal(&[3.0, 1.0]);
        let x0 = v(&[0.0, 0.0]);
        let c = estimate_operator_norm(&op, &x0, 50).unwrap();
        assert!((c - 3.0).abs() < 0.03);
        let c = estimate_operator_norm(&LinearOperator::identity(4), &v(&[0.0; 4]), 5).unwrap();
        assert_relative_eq!(c, 1.0, epsilon = 1e-12);
        let scaled = LinearOperator::diagonal(&[7.5, 2.5]);
        let cs = estimate_operator_norm(&scaled, &x0, 50).unwrap();
        let c = estimate_operator_norm(&op, &x0, 50).unwrap();
        assert_relative_eq!(cs, 2.5 * c, max_relative = 1e-12);
    }

    #[test]
    fn operator_norm_monotone_in_iterations() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 0.3, 0.0, 0.2, 4.0]);
        let op = LinearOperator::new(a);
        let x0 = v(&[0.0; 3]);
        let mut last = 0.0;
        for k in 1..20 {
            let c = estimate_operator_norm(&op, &x0, k).unwrap();
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn run_stops_immediately_at_solution() {
        let op = LinearOperator::identity(3);
        let x0 = v(&[1.0, 2.0, 3.0]);
        let y = x0.clone();
        for method in [Method::Landweber, Method::Resesop] {
            let run = run_solver(method, &op, &y, &x0, &exact(0.1), &RunOptions::default()).unwrap();
            assert_eq!(run.reason, StoppingReason::DiscrepancySatisfied);
            assert_eq!(run.iterations(), 0);
            assert_eq!(run.records.len(), 1);
        }
    }

    #[test]
    fn identity_convergence() {
        let op = LinearOperator::identity(10);
        let mut x0 = DVector::zeros(10);
        x0[0] = 1.0;
        let y = DVector::zeros(10);
        let cfg = exact(0.0).with_max_iterations(200).unwrap().with_clamp(false);
        let run = run_solver(Method::Resesop, &op, &y, &x0, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(run.iterations(), 1);
        assert_eq!(run.reason, StoppingReason::DiscrepancySatisfied);

        let cfg = cfg.with_omega(0.5).unwrap();
        let run = run_solver(Method::Landweber, &op, &y, &x0, &cfg, &RunOptions::default()).unwrap();
        for (n, r) in run.records.iter().enumerate().take(30) {
            assert_relative_eq!(r.residual_norm, 0.5f64.powi(n as i32), max_relative = 1e-14);
        }
    }

    #[test]
    fn zero_xi_resesop_is_landweber_with_adaptive_step() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.4, 0.2, 1.5, -0.3, 0.7]);
        let op = LinearOperator::new(a);
        let y = v(&[0.2, 0.1, -0.4]);
        let x = v(&[1.0, -2.0]);
        let (x1, _) = resesop_step(&x, &y, &op, &exact(0.0)).unwrap();
        let r = op.apply(&x).unwrap() - &y;
        let u = op.adjoint_apply(&x, &r).unwrap();
        let omega = r.norm_squared() / u.norm_squared();
        let lw = landweber_step(&x, &y, &op, omega).unwrap();
        assert_relative_eq!(x1, lw, epsilon = 1e-14);
    }

    #[test]
    fn clamping_and_domain_violation() {
        let op = LinearOperator::identity(2);
        let x0 = v(&[1.0, 1.0]);
        let y = v(&[-1.0, 0.5]);
        let cfg = exact(0.0).with_max_iterations(5).unwrap();
        let run = run_solver(Method::Resesop, &op, &y, &x0, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(run.records[0].clamped, 1);
        assert!(run.x.iter().all(|v| *v >= 0.0));

        let run = run_solver(
            Method::Resesop,
            &op,
            &y,
            &x0,
            &cfg.with_clamp(false),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(run.reason, StoppingReason::DomainViolation);
        assert_eq!(run.x, x0);
    }

    #[test]
    fn landweber_omega_derived_from_norm() {
        let op = LinearOperator::diagonal(&[2.0, 1.0]);
        let x0 = v(&[1.0, 1.0]);
        let y = v(&[0.0, 0.0]);
        let cfg = exact(0.0).with_max_iterations(3).unwrap();
        let run = run_solver(Method::Landweber, &op, &y, &x0, &cfg, &RunOptions::default()).unwrap();
        let omega = run.omega.unwrap();
        assert!(omega < 0.25 && omega > 0.2);
    }
}
