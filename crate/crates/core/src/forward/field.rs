use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::integrator::NewtonReport;
use super::mesh::PlateMesh;
use super::ForwardError;

/// Free-dof displacements and velocities at `t_j = j Δt`, `j = 0..=n_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub dt: f64,
    pub displacements: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    /// One report per time step.
    pub newton: Vec<NewtonReport>,
}

impl DisplacementField {
    pub fn levels(&self) -> usize {
        self.displacements.len()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.dt * level as f64
    }

    /// Nodal displacement of every mesh node at `level`, with zeros on the
    /// clamped nodes.
    pub fn nodal_values(&self, mesh: &PlateMesh, level: usize) -> Vec<[f64; 3]> {
        let u = &self.displacements[level];
        (0..mesh.node_count())
            .map(|n| match mesh.free_index(n) {
                Some(m) => [u[3 * m], u[3 * m + 1], u[3 * m + 2]],
                None => [0.0; 3],
            })
            .collect()
    }

    /// Largest Newton iteration count over all steps.
    pub fn max_newton_iterations(&self) -> usize {
        self.newton.iter().map(|r| r.iterations).max().unwrap_or(0)
    }

    /// Writes `t, node, x1, x2, x3, u1, u2, u3` rows for every level and node.
    pub fn write_csv<W: Write>(&self, mesh: &PlateMesh, out: W) -> Result<(), ForwardError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ForwardError::Io(e.to_string());
        w.write_record(["t", "node", "x1", "x2", "x3", "u1", "u2", "u3"]).map_err(io)?;
        for level in 0..self.levels() {
            let t = self.time(level);
            for (node, u) in self.nodal_values(mesh, level).iter().enumerate() {
                let x = mesh.node_coords(node);
                w.serialize((t, node, x[0], x[1], x[2], u[0], u[1], u[2])).map_err(io)?;
            }
        }
        w.flush().map_err(|e| ForwardError::Io(e.to_string()))
    }
}

/// Maps a trajectory to the data vector. Entry `(j, m, i)` carries
/// `sqrt(Δt w_m) u_i(t_j, x_m)` with `w_m = ∫ v_m`, so the Euclidean inner
/// product of data vectors is the weighted space-time L² product.
#[derive(Debug, Clone, PartialEq)]
pub struct DataLayout {
    scale: DVector<f64>,
    levels: usize,
}

impl DataLayout {
    pub fn new(node_weights: DVector<f64>, dt: f64, steps: usize) -> Self {
        let scale = DVector::from_fn(3 * node_weights.len(), |k, _| (dt * node_weights[k / 3]).sqrt());
        Self {
            scale,
            levels: steps + 1,
        }
    }

    pub fn dofs(&self) -> usize {
        self.scale.len()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn data_dim(&self) -> usize {
        self.levels * self.scale.len()
    }

    /// Per-dof weight `sqrt(Δt w_m)`.
    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn restrict_to_measurements(&self, field: &DisplacementField) -> DVector<f64> {
        let n = self.dofs();
        let mut y = DVector::zeros(self.data_dim());
        for (j, u) in field.displacements.iter().enumerate().take(self.levels) {
            y.rows_mut(j * n, n).copy_from(&u.component_mul(&self.scale));
        }
        y
    }

    /// Unweighted per-level block `w_j` of a data vector, scaled once more by
    /// the weights. This is the load `W w_j` that enters adjoint solves.
    pub fn weighted_block(&self, data: &DVector<f64>, level: usize) -> DVector<f64> {
        let n = self.dofs();
        data.rows(level * n, n).component_mul(&self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::mesh::MeshSpec;

    #[test]
    fn restriction_realizes_weighted_norm() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        let m = mesh.free_nodes().len();
        let weights = DVector::from_fn(m, |k, _| 0.5 + k as f64 * 0.01);
        let layout = DataLayout::new(weights.clone(), 0.25, 2);
        let field = DisplacementField {
            dt: 0.25,
            displacements: (0..3).map(|j| DVector::from_element(3 * m, j as f64)).collect(),
            velocities: vec![],
            newton: vec![],
        };
        let y = layout.restrict_to_measurements(&field);
        assert_eq!(y.len(), 3 * 3 * m);
        let expected: f64 = (0..3)
            .map(|j| 0.25 * (j * j) as f64 * 3.0 * weights.sum())
            .sum();
        assert!((y.norm_squared() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn csv_includes_clamped_nodes() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        let field = DisplacementField {
            dt: 0.5,
            displacements: vec![DVector::from_element(mesh.dof_count(), 1.0); 2],
            velocities: vec![],
            newton: vec![],
        };
        let mut buf = Vec::new();
        field.write_csv(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * mesh.node_count());
        assert!(text.lines().nth(1).unwrap().ends_with(",0.0,0.0,0.0"));
    }
}
