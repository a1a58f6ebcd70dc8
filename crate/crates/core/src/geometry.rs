//! Hyperplanes, half-spaces and stripes in `R^n`, and metric projections onto
//! them and onto their intersections.
//!
//! All vectors are plain [`DVector<f64>`] with the Euclidean inner product.
//! Constructors reject zero normals and non-finite entries, so every value of
//! [`Hyperplane`], [`HalfSpace`] and [`Stripe`] is a valid closed convex set.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Absolute membership tolerance, scaled by `(1 + |x|) * |u|` at use sites.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Relative pivot threshold for the Gram matrix of hyperplane normals.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty vector")]
    Empty,
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("normals are rank deficient (pivot {pivot:e} at position {position})")]
    RankDeficient { position: usize, pivot: f64 },
    #[error("inner minimization did not converge in {iterations} iterations (gradient norm {gradient_norm:e})")]
    IterationLimit {
        iterations: usize,
        gradient_norm: f64,
    },
}

pub(crate) fn check_finite(v: &DVector<f64>) -> Result<(), GeometryError> {
    if v.is_empty() {
        return Err(GeometryError::Empty);
    }
    match v.iter().position(|e| !e.is_finite()) {
        Some(index) => Err(GeometryError::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_dim(expected: usize, x: &DVector<f64>) -> Result<(), GeometryError> {
    if x.len() != expected {
        return Err(GeometryError::DimensionMismatch {
            expected,
            actual: x.len(),
        });
    }
    check_finite(x)
}

fn check_normal(normal: &DVector<f64>) -> Result<(), GeometryError> {
    check_finite(normal)?;
    if normal.norm_squared() == 0.0 {
        return Err(GeometryError::InvalidGeometry("zero normal vector"));
    }
    Ok(())
}

fn check_scalar(value: f64) -> Result<(), GeometryError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidGeometry("non-finite offset"))
    }
}

/// Membership tolerance for a point `x` against a set with normal `u`.
pub fn membership_tolerance(x: &DVector<f64>, normal: &DVector<f64>) -> f64 {
    MEMBERSHIP_TOL * (1.0 + x.norm()) * normal.norm()
}

/// `H(u, a) = { x : <u, x> = a }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: DVector<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        check_normal(&normal)?;
        check_scalar(offset)?;
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed distance along the normal, `<u, x> - a`.
    pub fn excess(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.excess(x).abs() <= membership_tolerance(x, &self.normal)
    }
}

/// Orientation of a half-space boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Lt,
    Gt,
}

/// `H_s(u, a) = { x : <u, x> s a }`.
///
/// Strict half-spaces are open; projecting onto them projects onto their
/// closure.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: DVector<f64>,
    offset: f64,
    sense: Sense,
}

impl HalfSpace {
    pub fn new(normal: DVector<f64>, offset: f64, sense: Sense) -> Result<Self, GeometryError> {
        check_normal(&normal)?;
        check_scalar(offset)?;
        Ok(Self {
            normal,
            offset,
            sense,
        })
    }

    pub fn le(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        Self::new(normal, offset, Sense::Le)
    }

    pub fn ge(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        Self::new(normal, offset, Sense::Ge)
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Closed senses accept points up to [`membership_tolerance`] outside, so
    /// projections onto the boundary count as members. Strict senses compare
    /// exactly.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        let s = self.normal.dot(x);
        let tol = membership_tolerance(x, &self.normal);
        match self.sense {
            Sense::Le => s <= self.offset + tol,
            Sense::Ge => s >= self.offset - tol,
            Sense::Lt => s < self.offset,
            Sense::Gt => s > self.offset,
        }
    }

    /// The same closed set written as `<u', x> <= a'`.
    pub fn to_le(&self) -> HalfSpace {
        match self.sense {
            Sense::Le | Sense::Lt => HalfSpace {
                normal: self.normal.clone(),
                offset: self.offset,
                sense: Sense::Le,
            },
            Sense::Ge | Sense::Gt => HalfSpace {
                normal: -&self.normal,
                offset: -self.offset,
                sense: Sense::Le,
            },
        }
    }
}

/// `H(u, a, xi) = { x : |<u, x> - a| <= xi }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stripe {
    normal: DVector<f64>,
    offset: f64,
    halfwidth: f64,
}

impl Stripe {
    pub fn new(normal: DVector<f64>, offset: f64, halfwidth: f64) -> Result<Self, GeometryError> {
        check_normal(&normal)?;
        check_scalar(offset)?;
        check_scalar(halfwidth)?;
        if halfwidth < 0.0 {
            return Err(GeometryError::InvalidGeometry("negative stripe halfwidth"));
        }
        Ok(Self {
            normal,
            offset,
            halfwidth,
        })
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (self.normal.dot(x) - self.offset).abs()
            <= self.halfwidth + membership_tolerance(x, &self.normal)
    }

    /// Bounding half-space `<u, x> <= a + xi`.
    pub fn upper(&self) -> HalfSpace {
        HalfSpace {
            normal: self.normal.clone(),
            offset: self.offset + self.halfwidth,
            sense: Sense::Le,
        }
    }

    /// Bounding half-space `<u, x> >= a - xi`.
    pub fn lower(&self) -> HalfSpace {
        HalfSpace {
            normal: self.normal.clone(),
            offset: self.offset - self.halfwidth,
            sense: Sense::Ge,
        }
    }

    /// The bounding half-space that `x` violates, if any.
    pub fn violated_bound(&self, x: &DVector<f64>) -> Option<HalfSpace> {
        let s = self.normal.dot(x);
        if s > self.offset + self.halfwidth {
            Some(self.upper())
        } else if s < self.offset - self.halfwidth {
            Some(self.lower())
        } else {
            None
        }
    }
}

fn step_along(x: &DVector<f64>, normal: &DVector<f64>, excess: f64) -> DVector<f64> {
    let t = excess / normal.norm_squared();
    x - normal * t
}

pub fn project_hyperplane(x: &DVector<f64>, h: &Hyperplane) -> Result<DVector<f64>, GeometryError> {
    check_dim(h.dim(), x)?;
    Ok(step_along(x, &h.normal, h.excess(x)))
}

/// Projection onto a closed half-space (strict senses use the closure).
pub fn project_halfspace(x: &DVector<f64>, h: &HalfSpace) -> Result<DVector<f64>, GeometryError> {
    check_dim(h.normal.len(), x)?;
    let le = h.to_le();
    let excess = le.normal.dot(x) - le.offset;
    if excess <= 0.0 {
        Ok(x.clone())
    } else {
        Ok(step_along(x, &le.normal, excess))
    }
}

pub fn project_stripe(x: &DVector<f64>, s: &Stripe) -> Result<DVector<f64>, GeometryError> {
    check_dim(s.normal.len(), x)?;
    let ux = s.normal.dot(x);
    let upper = s.offset + s.halfwidth;
    let lower = s.offset - s.halfwidth;
    if ux > upper {
        Ok(step_along(x, &s.normal, ux - upper))
    } else if ux < lower {
        Ok(step_along(x, &s.normal, ux - lower))
    } else {
        Ok(x.clone())
    }
}

/// Result of projecting onto an intersection of hyperplanes.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionProjection {
    pub point: DVector<f64>,
    /// Minimizer of `h(t) = 1/2 |x - sum t_i u_i|^2 + sum t_i a_i`.
    pub coefficients: DVector<f64>,
}

/// Partial derivatives of `h(t)`: `-<u_j, x - sum t_i u_i> + a_j`.
pub fn intersection_objective_gradient(
    x: &DVector<f64>,
    planes: &[Hyperplane],
    t: &DVector<f64>,
) -> DVector<f64> {
    let mut z = x.clone();
    for (ti, h) in t.iter().zip(planes) {
        z.axpy(-ti, &h.normal, 1.0);
    }
    DVector::from_iterator(
        planes.len(),
        planes.iter().map(|h| -h.normal.dot(&z) + h.offset),
    )
}

/// Cholesky factor of a symmetric positive definite matrix; reports the first
/// pivot that falls below `RANK_TOL * max|G|`.
fn gram_cholesky(g: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let n = g.nrows();
    let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let threshold = RANK_TOL * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= threshold {
            return Err(GeometryError::RankDeficient {
                position: j,
                pivot: d,
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Conjugate gradients on `G t = b`, warm-started at `t`.
fn conjugate_gradient(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    mut t: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, GeometryError> {
    let mut r = b - g * &t;
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            return Ok(t);
        }
        let gp = g * &p;
        let a = rr / p.dot(&gp);
        t.axpy(a, &p, 1.0);
        r.axpy(-a, &gp, 1.0);
        let rr_new = r.norm_squared();
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    if rr.sqrt() <= tol {
        Ok(t)
    } else {
        Err(GeometryError::IterationLimit {
            iterations: max_iter,
            gradient_norm: rr.sqrt(),
        })
    }
}

/// Projection onto `H(u_1, a_1) ∩ ... ∩ H(u_N, a_N)` by minimizing `h(t)`.
///
/// `h` is quadratic with Hessian equal to the Gram matrix of the normals, so
/// its minimizer solves `G t = b` with `b_j = <u_j, x> - a_j`. The direct
/// solve is polished by conjugate gradients when the stationarity residual is
/// not below `1e-8 * (1 + |x|)`.
pub fn project_hyperplane_intersection(
    x: &DVector<f64>,
    planes: &[Hyperplane],
) -> Result<IntersectionProjection, GeometryError> {
    let Some(first) = planes.first() else {
        check_finite(x)?;
        return Ok(IntersectionProjection {
            point: x.clone(),
            coefficients: DVector::zeros(0),
        });
    };
    let dim = first.dim();
    check_dim(dim, x)?;
    for h in planes {
        if h.dim() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                actual: h.dim(),
            });
        }
    }
    let n = planes.len();
    let gram = DMatrix::from_fn(n, n, |i, j| planes[i].normal.dot(&planes[j].normal));
    let rhs = DVector::from_iterator(n, planes.iter().map(|h| h.excess(x)));
    let l = gram_cholesky(&gram)?;
    let mut t = cholesky_solve(&l, &rhs);

    let tol = 1e-8 * (1.0 + x.norm());
    if intersection_objective_gradient(x, planes, &t).amax() > tol {
        t = conjugate_gradient(&gram, &rhs, t, 0.1 * tol, 10 * n + 10)?;
    }
    let mut point = x.clone();
    for (ti, h) in t.iter().zip(planes) {
        point.axpy(-ti, &h.normal, 1.0);
    }
    Ok(IntersectionProjection {
        point,
        coefficients: t,
    })
}

/// Projection onto the intersection of two half-spaces with linearly
/// independent normals.
///
/// The active set is found by enumeration: the candidate `x - t1 u1 - t2 u2`
/// must have `t1, t2 >= 0`, satisfy both constraints, and be complementary
/// (`t_i > 0` only for active constraints).
pub fn project_two_halfspaces(
    x: &DVector<f64>,
    h1: &HalfSpace,
    h2: &HalfSpace,
) -> Result<DVector<f64>, GeometryError> {
    let (h1, h2) = (h1.to_le(), h2.to_le());
    let dim = h1.normal.len();
    check_dim(dim, x)?;
    if h2.normal.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            actual: h2.normal.len(),
        });
    }
    let (u1, u2) = (&h1.normal, &h2.normal);
    let g11 = u1.norm_squared();
    let g22 = u2.norm_squared();
    let g12 = u1.dot(u2);
    let det = g11 * g22 - g12 * g12;
    if det <= RANK_TOL * g11 * g22 {
        return Err(GeometryError::InvalidGeometry(
            "half-space normals are linearly dependent",
        ));
    }

    let tol1 = membership_tolerance(x, u1);
    let tol2 = membership_tolerance(x, u2);
    let e1 = u1.dot(x) - h1.offset;
    let e2 = u2.dot(x) - h2.offset;
    if e1 <= 0.0 && e2 <= 0.0 {
        return Ok(x.clone());
    }

    // Only the first constraint active.
    if e1 > 0.0 {
        let t1 = e1 / g11;
        let z = x - u1 * t1;
        if u2.dot(&z) - h2.offset <= tol2 {
            return Ok(z);
        }
    }
    // Only the second constraint active.
    if e2 > 0.0 {
        let t2 = e2 / g22;
        let z = x - u2 * t2;
        if u1.dot(&z) - h1.offset <= tol1 {
            return Ok(z);
        }
    }
    // Both active: G t = e.
    let t1 = (g22 * e1 - g12 * e2) / det;
    let t2 = (g11 * e2 - g12 * e1) / det;
    let t_tol = 1e-12 * (1.0 + t1.abs() + t2.abs());
    if t1 < -t_tol || t2 < -t_tol {
        // Unreachable for independent normals; KKT guarantees one of the three
        // active sets above succeeds.
        return Err(GeometryError::InvalidGeometry("no KKT point found"));
    }
    Ok(x - u1 * t1.max(0.0) - u2 * t2.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn hyperplane_examples() {
        let h = Hyperplane::new(v(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(project_hyperplane(&v(&[3.0, 1.0]), &h).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(project_hyperplane(&v(&[1.0, 5.0]), &h).unwrap(), v(&[1.0, 5.0]));
        let h = Hyperplane::new(v(&[0.0, 1.0]), 0.0).unwrap();
        assert_eq!(project_hyperplane(&v(&[2.0, 3.0]), &h).unwrap(), v(&[2.0, 0.0]));
    }

    #[test]
    fn halfspace_examples() {
        let h = HalfSpace::le(v(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(project_halfspace(&v(&[0.0, 0.0]), &h).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(project_halfspace(&v(&[3.0, 1.0]), &h).unwrap(), v(&[1.0, 1.0]));
        let h = HalfSpace::le(v(&[-1.0, 0.0]), 1.0).unwrap();
        assert_eq!(project_halfspace(&v(&[-5.0, 2.0]), &h).unwrap(), v(&[-1.0, 2.0]));
    }

    #[test]
    fn ge_halfspace_is_mirrored_le() {
        let h = HalfSpace::ge(v(&[1.0, 1.0]), 2.0).unwrap();
        let p = project_halfspace(&v(&[0.0, 0.0]), &h).unwrap();
        assert_relative_eq!(p, v(&[1.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn stripe_examples() {
        let s = Stripe::new(v(&[1.0, 0.0]), 1.0, 1.0).unwrap();
        assert_eq!(project_stripe(&v(&[3.0, 1.0]), &s).unwrap(), v(&[2.0, 1.0]));
        assert_eq!(project_stripe(&v(&[1.5, 7.0]), &s).unwrap(), v(&[1.5, 7.0]));
        assert_eq!(project_stripe(&v(&[-4.0, 7.0]), &s).unwrap(), v(&[0.0, 7.0]));
    }

    #[test]
    fn degenerate_stripe_is_hyperplane() {
        let u = v(&[0.3, -1.2, 2.0]);
        let s = Stripe::new(u.clone(), 0.7, 0.0).unwrap();
        let h = Hyperplane::new(u, 0.7).unwrap();
        for x in [v(&[1.0, 2.0, 3.0]), v(&[-4.0, 0.5, 0.0]), v(&[0.0, 0.0, 0.35])] {
            assert_relative_eq!(
                project_stripe(&x, &s).unwrap(),
                project_hyperplane(&x, &h).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn intersection_examples() {
        let planes = [
            Hyperplane::new(v(&[1.0, 0.0]), 0.0).unwrap(),
            Hyperplane::new(v(&[0.0, 1.0]), 0.0).unwrap(),
        ];
        let p = project_hyperplane_intersection(&v(&[2.0, 3.0]), &planes).unwrap();
        assert_relative_eq!(p.point, v(&[0.0, 0.0]));
        assert_relative_eq!(p.coefficients, v(&[2.0, 3.0]));

        let p = project_hyperplane_intersection(&v(&[0.0, 0.0]), &planes).unwrap();
        assert_eq!(p.point, v(&[0.0, 0.0]));
        assert_eq!(p.coefficients, v(&[0.0, 0.0]));

        let h = Hyperplane::new(v(&[1.0, 2.0]), 3.0).unwrap();
        let x = v(&[4.0, -1.0]);
        let p = project_hyperplane_intersection(&x, std::slice::from_ref(&h)).unwrap();
        assert_relative_eq!(p.point, project_hyperplane(&x, &h).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn intersection_rank_deficiency_is_reported() {
        let planes = [
            Hyperplane::new(v(&[1.0, 1.0, 0.0]), 0.0).unwrap(),
            Hyperplane::new(v(&[2.0, 2.0, 0.0]), 0.0).unwrap(),
        ];
        let err = project_hyperplane_intersection(&v(&[1.0, 2.0, 3.0]), &planes).unwrap_err();
        assert!(matches!(err, GeometryError::RankDeficient { position: 1, .. }));
    }

    #[test]
    fn two_halfspace_examples() {
        let h1 = HalfSpace::le(v(&[1.0, 0.0]), 1.0).unwrap();
        let h2 = HalfSpace::le(v(&[0.0, 1.0]), 1.0).unwrap();
        assert_eq!(project_two_halfspaces(&v(&[2.0, 3.0]), &h1, &h2).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(project_two_halfspaces(&v(&[0.0, 0.0]), &h1, &h2).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(project_two_halfspaces(&v(&[2.0, 0.0]), &h1, &h2).unwrap(), v(&[1.0, 0.0]));
    }

    #[test]
    fn two_halfspaces_obtuse_corner() {
        // Acute feasible wedge: the point projects onto the vertex even though
        // projecting onto either half-space alone violates the other.
        let h1 = HalfSpace::le(v(&[1.0, 1.0]), 0.0).unwrap();
        let h2 = HalfSpace::le(v(&[-1.0, 1.0]), 0.0).unwrap();
        let p = project_two_halfspaces(&v(&[0.0, 5.0]), &h1, &h2).unwrap();
        assert_relative_eq!(p, v(&[0.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn dependent_halfspaces_rejected() {
        let h1 = HalfSpace::le(v(&[1.0, 0.0]), 1.0).unwrap();
        let h2 = HalfSpace::ge(v(&[-2.0, 0.0]), 1.0).unwrap();
        assert!(matches!(
            project_two_halfspaces(&v(&[2.0, 0.0]), &h1, &h2),
            Err(GeometryError::InvalidGeometry(_))
        ));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(
            Hyperplane::new(v(&[0.0, 0.0]), 1.0),
            Err(GeometryError::InvalidGeometry(_))
        ));
        assert!(matches!(
            Hyperplane::new(v(&[f64::NAN, 1.0]), 1.0),
            Err(GeometryError::NonFinite { index: 0 })
        ));
        assert!(matches!(
            Stripe::new(v(&[1.0]), 0.0, -1.0),
            Err(GeometryError::InvalidGeometry(_))
        ));
        let h = Hyperplane::new(v(&[1.0, 0.0]), 1.0).unwrap();
        assert!(matches!(
            project_hyperplane(&v(&[1.0, 2.0, 3.0]), &h),
            Err(GeometryError::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(
            project_hyperplane(&v(&[1.0, f64::INFINITY]), &h),
            Err(GeometryError::NonFinite { index: 1 })
        ));
    }
}
