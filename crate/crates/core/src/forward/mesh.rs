//! Box meshes with uniform knots and tensor-product linear B-splines.
//!
//! Axis 0 is the plate thickness `x1`; axes 1 and 2 span the plate surface
//! `(x2, x3)`. Nodes are numbered with `x1` fastest. The lateral faces
//! `x2 = a2, b2` and `x3 = a3, b3` are clamped.

use serde::{Deserialize, Serialize};

use super::ForwardError;

/// Uniform knot vector on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub knots: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, knots: usize) -> Result<Self, ForwardError> {
        if !(hi > lo) || knots < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(ForwardError::InvalidConfig(format!(
                "axis [{lo}, {hi}] with {knots} knots"
            )));
        }
        Ok(Self { lo, hi, knots })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.knots - 1) as f64
    }

    pub fn knot(&self, i: usize) -> f64 {
        self.lo + self.spacing() * i as f64
    }

    pub fn cells(&self) -> usize {
        self.knots - 1
    }

    /// Linear B-spline (hat) `b_i` centered at knot `i`.
    pub fn hat(&self, i: usize, x: f64) -> f64 {
        let t = (x - self.knot(i)).abs() / self.spacing();
        (1.0 - t).max(0.0)
    }

    /// Cell containing `x` (clamped to the axis) and the local coordinate in
    /// `[0, 1]`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.lo) / self.spacing()).clamp(0.0, self.cells() as f64);
        let cell = (s.floor() as usize).min(self.cells() - 1);
        (cell, s - cell as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub thickness: Axis,
    pub width: Axis,
    pub depth: Axis,
}

impl MeshSpec {
    /// 3 x 9 x 9 knots on `[-0.1, 0.1] x [-3, 3]^2`.
    pub fn desk() -> Self {
        Self {
            thickness: Axis { lo: -0.1, hi: 0.1, knots: 3 },
            width: Axis { lo: -3.0, hi: 3.0, knots: 9 },
            depth: Axis { lo: -3.0, hi: 3.0, knots: 9 },
        }
    }

    pub fn knots(&self) -> [usize; 3] {
        [self.thickness.knots, self.width.knots, self.depth.knots]
    }
}

#[derive(Debug, Clone)]
pub struct PlateMesh {
    axes: [Axis; 3],
    free_of_node: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

impl PlateMesh {
    pub fn new(spec: &MeshSpec) -> Result<Self, ForwardError> {
        let axes = [
            Axis::new(spec.thickness.lo, spec.thickness.hi, spec.thickness.knots)?,
            Axis::new(spec.width.lo, spec.width.hi, spec.width.knots)?,
            Axis::new(spec.depth.lo, spec.depth.hi, spec.depth.knots)?,
        ];
        if axes[1].knots < 3 || axes[2].knots < 3 {
            return Err(ForwardError::InvalidConfig(
                "surface axes need at least 3 knots to leave free nodes".into(),
            ));
        }
        let [n1, n2, n3] = [axes[0].knots, axes[1].knots, axes[2].knots];
        let mut free_of_node = vec![None; n1 * n2 * n3];
        let mut free_nodes = Vec::new();
        for c in 0..n3 {
            for b in 0..n2 {
                for a in 0..n1 {
                    let clamped = b == 0 || b == n2 - 1 || c == 0 || c == n3 - 1;
                    if !clamped {
                        let node = a + n1 * (b + n2 * c);
                        free_of_node[node] = Some(free_nodes.len());
                        free_nodes.push(node);
                    }
                }
            }
        }
        Ok(Self {
            axes,
            free_of_node,
            free_nodes,
        })
    }

    pub fn spec(&self) -> MeshSpec {
        MeshSpec {
            thickness: self.axes[0],
            width: self.axes[1],
            depth: self.axes[2],
        }
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn knots(&self) -> [usize; 3] {
        [self.axes[0].knots, self.axes[1].knots, self.axes[2].knots]
    }

    pub fn node_count(&self) -> usize {
        self.free_of_node.len()
    }

    pub fn node_index(&self, a: usize, b: usize, c: usize) -> usize {
        let [n1, n2, _] = self.knots();
        a + n1 * (b + n2 * c)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        let [n1, n2, _] = self.knots();
        let a = node % n1;
        let b = (node / n1) % n2;
        let c = node / (n1 * n2);
        [self.axes[0].knot(a), self.axes[1].knot(b), self.axes[2].knot(c)]
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.free_of_node[node].is_none()
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_of_node[node]
    }

    /// Free nodes in dof order.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn dof_count(&self) -> usize {
        3 * self.free_nodes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(Axis::cells).product()
    }

    pub fn cell_size(&self) -> [f64; 3] {
        [self.axes[0].spacing(), self.axes[1].spacing(), self.axes[2].spacing()]
    }

    /// Cell index triple of cell `e`.
    pub fn cell_ijk(&self, e: usize) -> [usize; 3] {
        let c1 = self.axes[0].cells();
        let c2 = self.axes[1].cells();
        [e % c1, (e / c1) % c2, e / (c1 * c2)]
    }

    /// Lower corner of cell `e`.
    pub fn cell_origin(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.cell_ijk(e);
        [self.axes[0].knot(i), self.axes[1].knot(j), self.axes[2].knot(k)]
    }

    /// The 8 corner nodes of cell `e`; corner `q = qa + 2 qb + 4 qc`.
    pub fn cell_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.cell_ijk(e);
        std::array::from_fn(|q| self.node_index(i + (q & 1), j + ((q >> 1) & 1), k + (q >> 2)))
    }

    /// Trilinear basis function of `node` at `x`.
    pub fn basis(&self, node: usize, x: [f64; 3]) -> f64 {
        let [n1, n2, _] = self.knots();
        let a = node % n1;
        let b = (node / n1) % n2;
        let c = node / (n1 * n2);
        self.axes[0].hat(a, x[0]) * self.axes[1].hat(b, x[1]) * self.axes[2].hat(c, x[2])
    }

    /// Number of surface B-spline pairs `(i, j)`, i.e. dictionary size.
    pub fn surface_count(&self) -> usize {
        self.axes[1].knots * self.axes[2].knots
    }

    /// Flattened surface index `K = n_cols i + j`.
    pub fn surface_index(&self, i: usize, j: usize) -> usize {
        self.axes[2].knots * i + j
    }

    /// Surface B-spline `b_i(x2) b_j(x3)`.
    pub fn surface_basis(&self, i: usize, j: usize, x2: f64, x3: f64) -> f64 {
        self.axes[1].hat(i, x2) * self.axes[2].hat(j, x3)
    }

    /// Surface knot closest to the plate center.
    pub fn center_surface_knot(&self) -> (usize, usize) {
        ((self.axes[1].knots - 1) / 2, (self.axes[2].knots - 1) / 2)
    }

    /// Largest `|dof_i - dof_j|` over pairs sharing a cell.
    pub fn half_bandwidth(&self) -> usize {
        let mut bw = 0;
        for e in 0..self.cell_count() {
            let free: Vec<usize> = self
                .cell_nodes(e)
                .iter()
                .filter_map(|&n| self.free_of_node[n])
                .collect();
            if let (Some(lo), Some(hi)) = (free.iter().min(), free.iter().max()) {
                bw = bw.max(3 * (hi - lo) + 2);
            }
        }
        bw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_of_unity_at_random_points() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = [
                rng.random_range(-0.1..0.1),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ];
            let s: f64 = (0..mesh.node_count()).map(|n| mesh.basis(n, x)).sum();
            assert!((s - 1.0).abs() < 1e-12);
            let mut surf = 0.0;
            for i in 0..9 {
                for j in 0..9 {
                    surf += mesh.surface_basis(i, j, x[1], x[2]);
                }
            }
            assert!((surf - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_support_is_at_most_eight_cells() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        for node in 0..mesh.node_count() {
            let cells = (0..mesh.cell_count())
                .filter(|&e| mesh.cell_nodes(e).contains(&node))
                .count();
            assert!(cells <= 8 && cells >= 1);
        }
    }

    #[test]
    fn lateral_faces_clamped() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        assert_eq!(mesh.free_nodes().len(), 3 * 7 * 7);
        assert!(mesh.is_dirichlet(mesh.node_index(1, 0, 4)));
        assert!(mesh.is_dirichlet(mesh.node_index(0, 4, 8)));
        assert!(!mesh.is_dirichlet(mesh.node_index(0, 4, 4)));
        assert!(!mesh.is_dirichlet(mesh.node_index(2, 1, 7)));
    }

    #[test]
    fn cell_nodes_are_corners() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        let e = 37;
        let origin = mesh.cell_origin(e);
        let h = mesh.cell_size();
        for (q, n) in mesh.cell_nodes(e).iter().enumerate() {
            let x = mesh.node_coords(*n);
            for k in 0..3 {
                let off = ((q >> k) & 1) as f64;
                assert!((x[k] - origin[k] - off * h[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn surface_flattening() {
        let mesh = PlateMesh::new(&MeshSpec::desk()).unwrap();
        assert_eq!(mesh.surface_count(), 81);
        assert_eq!(mesh.surface_index(3, 4), 31);
        assert_eq!(mesh.center_surface_knot(), (4, 4));
    }
}
