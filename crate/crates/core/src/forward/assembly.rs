//! Galerkin assembly for trilinear elements with 2 x 2 x 2 Gauss quadrature.
//!
//! The stored energy density at `x` is `a(x) Ĉ(I + ∇u)`, where the stiffness
//! field `a(x) = Σ_ij α_ij b_i(x2) b_j(x3)` is constant through the
//! thickness. The internal force vector is the gradient of the discrete
//! stored energy with respect to the free nodal displacements.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use super::band::BandMatrix;
use super::material::{first_piola_reference, neo_hookean_energy, piola_tangent, MaterialModel};
use super::mesh::PlateMesh;
use super::ForwardError;

/// Coefficients `α_ij` of the surface B-spline dictionary, flattened with
/// `K = n_cols i + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryField {
    pub n_rows: usize,
    pub n_cols: usize,
    pub coefficients: DVector<f64>,
}

impl DictionaryField {
    pub fn homogeneous(mesh: &PlateMesh) -> Self {
        let [_, n2, n3] = mesh.knots();
        Self {
            n_rows: n2,
            n_cols: n3,
            coefficients: DVector::from_element(n2 * n3, 1.0),
        }
    }

    pub fn from_vector(mesh: &PlateMesh, coefficients: DVector<f64>) -> Result<Self, ForwardError> {
        let [_, n2, n3] = mesh.knots();
        if coefficients.len() != n2 * n3 {
            return Err(ForwardError::InvalidConfig(format!(
                "expected {} dictionary coefficients, got {}",
                n2 * n3,
                coefficients.len()
            )));
        }
        if let Some(k) = coefficients.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ForwardError::InvalidConfig(format!(
                "coefficient {k} = {} is not a finite nonnegative number",
                coefficients[k]
            )));
        }
        Ok(Self {
            n_rows: n2,
            n_cols: n3,
            coefficients,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coefficients[self.n_cols * i + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.coefficients[self.n_cols * i + j] = v;
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Row-major `n_rows x n_cols` matrix view.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows, self.n_cols, |i, j| self.get(i, j))
    }
}

/// How the surface coefficients extend through the plate thickness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageLayer {
    /// `a(x) = Σ α_ij b_i(x2) b_j(x3)` at every depth.
    #[default]
    Uniform,
    /// `a(x) = 1 + t(x1) (Σ α_ij b_i(x2) b_j(x3) - 1)` with `t` the hat
    /// function of the top thickness knot: the coefficients act fully on the
    /// top face and fade out over the top cell layer.
    Top,
}

/// Stiffness weighting of the stored energy.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientField {
    /// `a(x) = value`; `Constant(1.0)` is the single reference energy `Ĉ`.
    Constant(f64),
    Dictionary(DictionaryField),
}

#[derive(Debug, Clone, Copy)]
struct QuadPoint {
    /// Local coordinates in `[0, 1]^3`.
    local: [f64; 3],
    shape: [f64; 8],
    grad: [[f64; 3]; 8],
    weight: f64,
}

fn reference_quadrature(h: [f64; 3]) -> [QuadPoint; 8] {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let volume = h[0] * h[1] * h[2];
    std::array::from_fn(|p| {
        let s = [pts[p & 1], pts[(p >> 1) & 1], pts[p >> 2]];
        let mut shape = [0.0; 8];
        let mut grad = [[0.0; 3]; 8];
        for q in 0..8 {
            let f: [f64; 3] =
                std::array::from_fn(|k| if (q >> k) & 1 == 1 { s[k] } else { 1.0 - s[k] });
            let df: [f64; 3] =
                std::array::from_fn(|k| if (q >> k) & 1 == 1 { 1.0 } else { -1.0 } / h[k]);
            shape[q] = f[0] * f[1] * f[2];
            grad[q] = [df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]];
        }
        QuadPoint {
            local: s,
            shape,
            grad,
            weight: volume / 8.0,
        }
    })
}

#[derive(Debug, Clone)]
pub struct Assembler {
    mesh: PlateMesh,
    material: MaterialModel,
    density: f64,
    quad: [QuadPoint; 8],
    /// Free-node index of each cell corner.
    cell_free: Vec<[Option<usize>; 8]>,
    /// Surface dictionary indices and weights at each quadrature point.
    cell_surface: Vec<[[(usize, f64); 4]; 8]>,
    /// Share of the dictionary in `a(x)` at each quadrature point; the rest
    /// is reference material.
    layer_weight: Vec<[f64; 8]>,
    layer: DamageLayer,
    bandwidth: usize,
}

impl Assembler {
    pub fn new(mesh: PlateMesh, material: MaterialModel, density: f64) -> Result<Self, ForwardError> {
        if !(density > 0.0 && density.is_finite()) {
            return Err(ForwardError::InvalidConfig(format!("density {density} must be positive")));
        }
        let quad = reference_quadrature(mesh.cell_size());
        let n3 = mesh.knots()[2];
        let cell_free = (0..mesh.cell_count())
            .map(|e| mesh.cell_nodes(e).map(|n| mesh.free_index(n)))
            .collect();
        let cell_surface = (0..mesh.cell_count())
            .map(|e| {
                let [_, j, k] = mesh.cell_ijk(e);
                quad.map(|qp| {
                    let (s2, s3) = (qp.local[1], qp.local[2]);
                    [
                        (n3 * j + k, (1.0 - s2) * (1.0 - s3)),
                        (n3 * (j + 1) + k, s2 * (1.0 - s3)),
                        (n3 * j + k + 1, (1.0 - s2) * s3),
                        (n3 * (j + 1) + k + 1, s2 * s3),
                    ]
                })
            })
            .collect();
        let bandwidth = mesh.half_bandwidth();
        let layer_weight = vec![[1.0; 8]; mesh.cell_count()];
        Ok(Self {
            mesh,
            material,
            density,
            quad,
            cell_free,
            cell_surface,
            layer_weight,
            layer: DamageLayer::Uniform,
            bandwidth,
        })
    }

    pub fn with_damage_layer(mut self, layer: DamageLayer) -> Self {
        let axis = *self.mesh.axis(0);
        let top = axis.knots - 1;
        self.layer_weight = (0..self.mesh.cell_count())
            .map(|e| {
                let x1 = self.mesh.cell_origin(e)[0];
                self.quad.map(|qp| match layer {
                    DamageLayer::Uniform => 1.0,
                    DamageLayer::Top => axis.hat(top, x1 + qp.local[0] * axis.spacing()),
                })
            })
            .collect();
        self.layer = layer;
        self
    }

    pub fn damage_layer(&self) -> DamageLayer {
        self.layer
    }

    pub fn mesh(&self) -> &PlateMesh {
        &self.mesh
    }

    pub fn material(&self) -> &MaterialModel {
        &self.material
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    pub fn dictionary_size(&self) -> usize {
        self.mesh.surface_count()
    }

    fn coefficient_at(&self, field: &CoefficientField, e: usize, q: usize) -> f64 {
        match field {
            CoefficientField::Constant(v) => *v,
            CoefficientField::Dictionary(d) => {
                let t = self.layer_weight[e][q];
                let s: f64 = self.cell_surface[e][q]
                    .iter()
                    .map(|&(k, w)| d.coefficients[k] * w)
                    .sum();
                t * s + (1.0 - t)
            }
        }
    }

    fn check_field(&self, field: &CoefficientField) -> Result<(), ForwardError> {
        if let CoefficientField::Dictionary(d) = field {
            if d.len() != self.dictionary_size() {
                return Err(ForwardError::InvalidConfig(format!(
                    "dictionary has {} coefficients, mesh needs {}",
                    d.len(),
                    self.dictionary_size()
                )));
            }
        }
        Ok(())
    }

    fn check_u(&self, u: &DVector<f64>) -> Result<(), ForwardError> {
        if u.len() != self.dof_count() {
            return Err(ForwardError::InvalidConfig(format!(
                "displacement has {} dofs, mesh has {}",
                u.len(),
                self.dof_count()
            )));
        }
        Ok(())
    }

    fn deformation_gradient(&self, e: usize, qp: &QuadPoint, u: &DVector<f64>) -> Matrix3<f64> {
        let mut f = Matrix3::identity();
        for (corner, free) in self.cell_free[e].iter().enumerate() {
            if let Some(m) = free {
                let g = &qp.grad[corner];
                for i in 0..3 {
                    let ui = u[3 * m + i];
                    for jj in 0..3 {
                        f[(i, jj)] += ui * g[jj];
                    }
                }
            }
        }
        f
    }

    fn cell_error(e: usize, err: ForwardError) -> ForwardError {
        match err {
            ForwardError::InvalidDeformation { det, .. } => {
                ForwardError::InvalidDeformation { cell: Some(e), det }
            }
            other => other,
        }
    }

    /// Discrete stored energy `Σ_qp w a(x) Ĉ(I + ∇u)`.
    pub fn energy(&self, field: &CoefficientField, u: &DVector<f64>) -> Result<f64, ForwardError> {
        self.check_field(field)?;
        self.check_u(u)?;
        let mut total = 0.0;
        for e in 0..self.mesh.cell_count() {
            for (q, qp) in self.quad.iter().enumerate() {
                let f = self.deformation_gradient(e, qp, u);
                let w = neo_hookean_energy(&f, &self.material).map_err(|err| Self::cell_error(e, err))?;
                total += qp.weight * self.coefficient_at(field, e, q) * w;
            }
        }
        Ok(total)
    }

    /// Internal force vector `∂E/∂u`.
    pub fn internal_force(
        &self,
        field: &CoefficientField,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, ForwardError> {
        self.check_field(field)?;
        self.check_u(u)?;
        let mut out = DVector::zeros(self.dof_count());
        for e in 0..self.mesh.cell_count() {
            for (q, qp) in self.quad.iter().enumerate() {
                let a = self.coefficient_at(field, e, q);
                if a == 0.0 {
                    continue;
                }
                let f = self.deformation_gradient(e, qp, u);
                let p = first_piola_reference(&f, &self.material)
                    .map_err(|err| Self::cell_error(e, err))?
                    * (a * qp.weight);
                self.scatter_stress(e, qp, &p, out.as_mut_slice());
            }
        }
        Ok(out)
    }

    /// Size of the internal force error caused by rounding the stress near
    /// the reference state: a relative error of a few ulps in every entry of
    /// `P`, whose entries are of order `2c a(x)`. Residuals below this are
    /// noise.
    pub fn force_round_off(&self, field: &CoefficientField) -> Result<f64, ForwardError> {
        self.check_field(field)?;
        let mut out = DVector::<f64>::zeros(self.dof_count());
        let stress = 4.0 * self.material.c();
        for e in 0..self.mesh.cell_count() {
            for (q, qp) in self.quad.iter().enumerate() {
                let a = self.coefficient_at(field, e, q).abs().max(1.0);
                for (corner, free) in self.cell_free[e].iter().enumerate() {
                    if let Some(m) = free {
                        let g = &qp.grad[corner];
                        let v = stress * a * qp.weight * (g[0].abs() + g[1].abs() + g[2].abs());
                        for i in 0..3 {
                            out[3 * m + i] += v;
                        }
                    }
                }
            }
        }
        Ok(16.0 * f64::EPSILON * out.norm())
    }

    fn scatter_stress(&self, e: usize, qp: &QuadPoint, p: &Matrix3<f64>, out: &mut [f64]) {
        for (corner, free) in self.cell_free[e].iter().enumerate() {
            if let Some(m) = free {
                let g = &qp.grad[corner];
                for i in 0..3 {
                    out[3 * m + i] += p[(i, 0)] * g[0] + p[(i, 1)] * g[1] + p[(i, 2)] * g[2];
                }
            }
        }
    }

    /// Internal force for each dictionary element separately: column `K` is
    /// the force with stiffness field `t(x1) b_i(x2) b_j(x3)`, where `t` is
    /// the layer weight. The full force is `Σ_K α_K column_K` plus
    /// [`Assembler::background_force`].
    pub fn dictionary_forces(&self, u: &DVector<f64>) -> Result<DMatrix<f64>, ForwardError> {
        self.check_u(u)?;
        let mut out = DMatrix::zeros(self.dof_count(), self.dictionary_size());
        let mut local = vec![0.0; self.dof_count()];
        for e in 0..self.mesh.cell_count() {
            for (q, qp) in self.quad.iter().enumerate() {
                let f = self.deformation_gradient(e, qp, u);
                let p = first_piola_reference(&f, &self.material)
                    .map_err(|err| Self::cell_error(e, err))?
                    * (qp.weight * self.layer_weight[e][q]);
                if p.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for &(k, w) in &self.cell_surface[e][q] {
                    if w == 0.0 {
                        continue;
                    }
                    for (corner, free) in self.cell_free[e].iter().enumerate() {
                        if let Some(m) = free {
                            let g = &qp.grad[corner];
                            for i in 0..3 {
                                local[3 * m + i] = w
                                    * (p[(i, 0)] * g[0] + p[(i, 1)] * g[1] + p[(i, 2)] * g[2]);
                            }
                        }
                    }
                    let mut col = out.column_mut(k);
                    for m in self.cell_free[e].iter().flatten() {
                        for i in 0..3 {
                            col[3 * m + i] += local[3 * m + i];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Force of the reference material outside the damage layer; zero for
    /// [`DamageLayer::Uniform`].
    pub fn background_force(&self, u: &DVector<f64>) -> Result<DVector<f64>, ForwardError> {
        let zero = DictionaryField {
            n_rows: self.mesh.knots()[1],
            n_cols: self.mesh.knots()[2],
            coefficients: DVector::zeros(self.dictionary_size()),
        };
        self.internal_force(&CoefficientField::Dictionary(zero), u)
    }

    /// Consistent tangent stiffness `∂² E / ∂u²`.
    pub fn tangent(&self, field: &CoefficientField, u: &DVector<f64>) -> Result<BandMatrix, ForwardError> {
        self.check_field(field)?;
        self.check_u(u)?;
        let mut k_mat = BandMatrix::zeros(self.dof_count(), self.bandwidth);
        for e in 0..self.mesh.cell_count() {
            for (q, qp) in self.quad.iter().enumerate() {
                let a = self.coefficient_at(field, e, q);
                if a == 0.0 {
                    continue;
                }
                let f = self.deformation_gradient(e, qp, u);
                let tangent = piola_tangent(&f, &self.material).map_err(|err| Self::cell_error(e, err))?;
                let scale = a * qp.weight;
                for (ca, fa) in self.cell_free[e].iter().enumerate() {
                    let Some(ma) = fa else { continue };
                    let ga = &qp.grad[ca];
                    // t[i][k][l] = Σ_J A[i][J][k][l] ga[J]
                    let mut t = [0.0; 27];
                    for i in 0..3 {
                        for kl in 0..9 {
                            t[9 * i + kl] = tangent[27 * i + kl] * ga[0]
                                + tangent[27 * i + 9 + kl] * ga[1]
                                + tangent[27 * i + 18 + kl] * ga[2];
                        }
                    }
                    for (cb, fb) in self.cell_free[e].iter().enumerate() {
                        let Some(mb) = fb else { continue };
                        if mb > ma {
                            continue;
                        }
                        let gb = &qp.grad[cb];
                        for i in 0..3 {
                            for k in 0..3 {
                                let base = 9 * i + 3 * k;
                                let v = t[base] * gb[0] + t[base + 1] * gb[1] + t[base + 2] * gb[2];
                                k_mat.add_lower(3 * ma + i, 3 * mb + k, scale * v);
                            }
                        }
                    }
                }
            }
        }
        Ok(k_mat)
    }

    /// Consistent mass matrix `ρ ∫ φ_a φ_b` on each component.
    pub fn mass(&self) -> BandMatrix {
        let mut m = BandMatrix::zeros(self.dof_count(), self.bandwidth);
        for e in 0..self.mesh.cell_count() {
            for qp in &self.quad {
                for (ca, fa) in self.cell_free[e].iter().enumerate() {
                    let Some(ma) = fa else { continue };
                    for (cb, fb) in self.cell_free[e].iter().enumerate() {
                        let Some(mb) = fb else { continue };
                        if mb > ma {
                            continue;
                        }
                        let v = self.density * qp.weight * qp.shape[ca] * qp.shape[cb];
                        for i in 0..3 {
                            m.add_lower(3 * ma + i, 3 * mb + i, v);
                        }
                    }
                }
            }
        }
        m
    }

    /// `∫ v_m dx` for each free node.
    pub fn nodal_weights(&self) -> DVector<f64> {
        let mut w = DVector::zeros(self.mesh.free_nodes().len());
        for e in 0..self.mesh.cell_count() {
            for qp in &self.quad {
                for (c, f) in self.cell_free[e].iter().enumerate() {
                    if let Some(m) = f {
                        w[*m] += qp.weight * qp.shape[c];
                    }
                }
            }
        }
        w
    }

    /// Load vector of the body force `φ(x2, x3) e_3`, where `φ` is the surface
    /// hat function at knot `(i, j)`, constant through the thickness.
    pub fn surface_bump_load(&self, i: usize, j: usize) -> DVector<f64> {
        self.surface_load(|x2, x3| self.mesh.surface_basis(i, j, x2, x3))
    }

    /// Load vector of the body force `φ(x2, x3) e_3` for an arbitrary surface
    /// profile, integrated with the cell quadrature.
    pub fn surface_load(&self, shape: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dof_count());
        for e in 0..self.mesh.cell_count() {
            let origin = self.mesh.cell_origin(e);
            let h = self.mesh.cell_size();
            for qp in &self.quad {
                let x2 = origin[1] + qp.local[1] * h[1];
                let x3 = origin[2] + qp.local[2] * h[2];
                let phi = shape(x2, x3);
                if phi == 0.0 {
                    continue;
                }
                for (c, f) in self.cell_free[e].iter().enumerate() {
                    if let Some(m) = f {
                        out[3 * m + 2] += qp.weight * phi * qp.shape[c];
                    }
                }
            }
        }
        out
    }
}
