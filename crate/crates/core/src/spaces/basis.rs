//! Lagrange bases written in barycentric coordinates.
//!
//! Local node order: vertices 0, 1, 2, then the midpoint of the edge opposite
//! vertex 0, 1, 2 (matching [`crate::mesh::Mesh::triangle_edges`]).

use serde::{Deserialize, Serialize};

use crate::mesh::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    P0,
    P1,
    P2,
    P2Vector,
}

impl ElementKind {
    /// Scalar basis functions per triangle.
    pub fn scalar_local(self) -> usize {
        match self {
            ElementKind::P0 => 1,
            ElementKind::P1 => 3,
            ElementKind::P2 | ElementKind::P2Vector => 6,
        }
    }

    pub fn components(self) -> usize {
        match self {
            ElementKind::P2Vector => 2,
            _ => 1,
        }
    }

    pub fn local_dofs(self) -> usize {
        self.scalar_local() * self.components()
    }

    pub fn degree(self) -> usize {
        match self {
            ElementKind::P0 => 0,
            ElementKind::P1 => 1,
            ElementKind::P2 | ElementKind::P2Vector => 2,
        }
    }
}

/// Gradients of the barycentric coordinates on the reference triangle.
pub const REF_GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Scalar basis values and gradients for given barycentric coordinates and
/// barycentric gradients. Only the first `kind.scalar_local()` slots are set.
pub fn scalar_basis(kind: ElementKind, lambda: [f64; 3], grad_lambda: &[[f64; 2]; 3], values: &mut [f64; 6], grads: &mut [[f64; 2]; 6]) {
    match kind {
        ElementKind::P0 => {
            values[0] = 1.0;
            grads[0] = [0.0, 0.0];
        }
        ElementKind::P1 => {
            for i in 0..3 {
                values[i] = lambda[i];
                grads[i] = grad_lambda[i];
            }
        }
        ElementKind::P2 | ElementKind::P2Vector => {
            for i in 0..3 {
                values[i] = lambda[i] * (2.0 * lambda[i] - 1.0);
                let s = 4.0 * lambda[i] - 1.0;
                grads[i] = [s * grad_lambda[i][0], s * grad_lambda[i][1]];
            }
            for k in 0..3 {
                let (j, l) = ((k + 1) % 3, (k + 2) % 3);
                values[3 + k] = 4.0 * lambda[j] * lambda[l];
                grads[3 + k] = [
                    4.0 * (lambda[j] * grad_lambda[l][0] + lambda[l] * grad_lambda[j][0]),
                    4.0 * (lambda[j] * grad_lambda[l][1] + lambda[l] * grad_lambda[j][1]),
                ];
            }
        }
    }
}

/// Scalar basis values and gradients on the reference triangle.
pub fn eval_basis(kind: ElementKind, lambda: [f64; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut values = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    scalar_basis(kind, lambda, &REF_GRAD_LAMBDA, &mut values, &mut grads);
    let n = kind.scalar_local();
    (values[..n].to_vec(), grads[..n].to_vec())
}

/// Affine geometry of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeometry {
    pub points: [Point; 3],
    pub area: f64,
    /// Physical gradients of the barycentric coordinates (constant per triangle).
    pub grad_lambda: [[f64; 2]; 3],
}

impl TriangleGeometry {
    pub fn new(points: [Point; 3]) -> TriangleGeometry {
        let [p0, p1, p2] = points;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let area = 0.5 * det;
        // grad lambda_i = rot(p_{i+2} - p_{i+1}) / (2 area), rotated by -90 degrees
        let mut grad_lambda = [[0.0; 2]; 3];
        for (i, g) in grad_lambda.iter_mut().enumerate() {
            let a = points[(i + 1) % 3];
            let b = points[(i + 2) % 3];
            *g = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        TriangleGeometry { points, area, grad_lambda }
    }

    pub fn map(&self, lambda: [f64; 3]) -> Point {
        let [p0, p1, p2] = self.points;
        [
            lambda[0] * p0[0] + lambda[1] * p1[0] + lambda[2] * p2[0],
            lambda[0] * p0[1] + lambda[1] * p1[1] + lambda[2] * p2[1],
        ]
    }

    /// Physical-space weight for a reference-triangle quadrature weight.
    pub fn jacobian_weight(&self, reference_weight: f64) -> f64 {
        2.0 * self.area * reference_weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: [[f64; 3]; 4] = [
        [0.2, 0.3, 0.5],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.7, 0.1, 0.2],
        [0.05, 0.9, 0.05],
    ];

    #[test]
    fn p1_is_kronecker_at_vertices() {
        for i in 0..3 {
            let mut l = [0.0; 3];
            l[i] = 1.0;
            let (v, _) = eval_basis(ElementKind::P1, l);
            for (j, x) in v.iter().enumerate() {
                assert_eq!(*x, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn p2_is_kronecker_at_nodes() {
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
        ];
        for (i, l) in nodes.iter().enumerate() {
            let (v, _) = eval_basis(ElementKind::P2, *l);
            for (j, x) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((x - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for kind in [ElementKind::P1, ElementKind::P2] {
            for l in SAMPLE {
                let (v, g) = eval_basis(kind, l);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                let gx: f64 = g.iter().map(|g| g[0]).sum();
                let gy: f64 = g.iter().map(|g| g[1]).sum();
                assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn geometry_gradients_match_reference() {
        let g = TriangleGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(g.area, 0.5);
        for i in 0..3 {
            assert!((g.grad_lambda[i][0] - REF_GRAD_LAMBDA[i][0]).abs() < 1e-15);
            assert!((g.grad_lambda[i][1] - REF_GRAD_LAMBDA[i][1]).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_gradient_matches_finite_difference() {
        let geom = TriangleGeometry::new([[0.1, 0.2], [0.7, 0.3], [0.3, 0.9]]);
        let l = [0.2, 0.3, 0.5];
        let mut v = [0.0; 6];
        let mut g = [[0.0; 2]; 6];
        scalar_basis(ElementKind::P2, l, &geom.grad_lambda, &mut v, &mut g);
        // perturb in physical x: lambda changes by grad_lambda * eps
        let eps = 1e-6;
        let shift = |d: [f64; 2]| -> [f64; 6] {
            let lp = [0, 1, 2].map(|i| l[i] + eps * (geom.grad_lambda[i][0] * d[0] + geom.grad_lambda[i][1] * d[1]));
            let mut vp = [0.0; 6];
            let mut gp = [[0.0; 2]; 6];
            scalar_basis(ElementKind::P2, lp, &geom.grad_lambda, &mut vp, &mut gp);
            vp
        };
        let vx = shift([1.0, 0.0]);
        let vy = shift([0.0, 1.0]);
        for i in 0..6 {
            assert!(((vx[i] - v[i]) / eps - g[i][0]).abs() < 1e-4);
            assert!(((vy[i] - v[i]) / eps - g[i][1]).abs() < 1e-4);
        }
    }
}
