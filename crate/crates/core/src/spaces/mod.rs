//! Finite element spaces: reference bases, quadrature, degree-of-freedom maps
//! and coefficient fields.
//!
//! Scalar node numbering is vertices first, then edges (edge `e` is node
//! `num_vertices + e`). Vector spaces interleave components per node, so the
//! `c`-th component of node `a` is dof `2 * a + c`; locally the same rule holds
//! for the six element nodes.

mod basis;
mod quadrature;

use std::sync::Arc;

pub use basis::{eval_basis, scalar_basis, ElementKind, TriangleGeometry, REF_GRAD_LAMBDA};
pub use quadrature::QuadratureRule;

use crate::mesh::{Mesh, Point, Side};
use crate::{Error, Result};

#[derive(Debug)]
pub struct DofMap {
    mesh: Arc<Mesh>,
    kind: ElementKind,
    cell_dofs: Vec<usize>,
    node_coords: Vec<Point>,
    num_dofs: usize,
    boundary: Vec<(usize, Side)>,
}

pub fn build_dofmap(mesh: Arc<Mesh>, kind: ElementKind) -> DofMap {
    let nv = mesh.num_vertices();
    let (node_coords, cell_nodes): (Vec<Point>, Vec<Vec<usize>>) = match kind {
        ElementKind::P0 => (
            (0..mesh.num_triangles()).map(|t| mesh.barycenter(t)).collect(),
            (0..mesh.num_triangles()).map(|t| vec![t]).collect(),
        ),
        ElementKind::P1 => (
            mesh.vertices().to_vec(),
            mesh.triangles().iter().map(|t| t.to_vec()).collect(),
        ),
        ElementKind::P2 | ElementKind::P2Vector => {
            let mut coords = mesh.vertices().to_vec();
            coords.extend(mesh.edges().iter().map(|e| {
                let p = mesh.vertices()[e.vertices[0]];
                let q = mesh.vertices()[e.vertices[1]];
                [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
            }));
            let cells = mesh
                .triangles()
                .iter()
                .zip(mesh.triangle_edges())
                .map(|(t, e)| vec![t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
                .collect();
            (coords, cells)
        }
    };

    let ncomp = kind.components();
    let cell_dofs: Vec<usize> = cell_nodes
        .iter()
        .flat_map(|nodes| nodes.iter().flat_map(move |&a| (0..ncomp).map(move |c| ncomp * a + c)))
        .collect();

    let mut boundary_nodes: Vec<(usize, Side)> = Vec::new();
    if kind != ElementKind::P0 {
        for &(e, side) in mesh.boundary_edges() {
            let edge = &mesh.edges()[e];
            boundary_nodes.push((edge.vertices[0], side));
            boundary_nodes.push((edge.vertices[1], side));
            if kind.degree() == 2 {
                boundary_nodes.push((nv + e, side));
            }
        }
        boundary_nodes.sort_unstable();
        boundary_nodes.dedup();
    }
    let boundary = boundary_nodes
        .iter()
        .flat_map(|&(a, s)| (0..ncomp).map(move |c| (ncomp * a + c, s)))
        .collect();

    let num_dofs = ncomp * node_coords.len();
    DofMap { mesh, kind, cell_dofs, node_coords, num_dofs, boundary }
}

impl DofMap {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn components(&self) -> usize {
        self.kind.components()
    }

    /// Global dofs of triangle `t` in local order.
    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        let n = self.kind.local_dofs();
        &self.cell_dofs[t * n..(t + 1) * n]
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    /// Location of a dof (vector components share their node's location).
    pub fn dof_coord(&self, dof: usize) -> Point {
        self.node_coords[dof / self.components()]
    }

    /// Boundary dofs with side markers; corner dofs appear once per side.
    pub fn boundary_dofs(&self) -> &[(usize, Side)] {
        &self.boundary
    }

    /// Sorted, deduplicated boundary dofs lying on any of `sides`.
    pub fn boundary_dofs_on(&self, sides: &[Side]) -> Vec<usize> {
        let mut dofs: Vec<usize> =
            self.boundary.iter().filter(|(_, s)| sides.contains(s)).map(|&(d, _)| d).collect();
        dofs.sort_unstable();
        dofs.dedup();
        dofs
    }

    pub fn geometry(&self, t: usize) -> TriangleGeometry {
        TriangleGeometry::new(self.mesh.triangle_points(t))
    }
}

/// Coefficient vector bound to a [`DofMap`].
#[derive(Clone, Debug)]
pub struct Field {
    dofmap: Arc<DofMap>,
    pub coeffs: Vec<f64>,
    pub time: Option<f64>,
}

impl Field {
    pub fn zeros(dofmap: Arc<DofMap>) -> Field {
        let n = dofmap.num_dofs();
        Field { dofmap, coeffs: vec![0.0; n], time: None }
    }

    pub fn from_coeffs(dofmap: Arc<DofMap>, coeffs: Vec<f64>) -> Result<Field> {
        if coeffs.len() != dofmap.num_dofs() {
            return Err(Error::DimensionMismatch { expected: dofmap.num_dofs(), found: coeffs.len() });
        }
        Ok(Field { dofmap, coeffs, time: None })
    }

    pub fn with_time(mut self, t: f64) -> Field {
        self.time = Some(t);
        self
    }

    pub fn dofmap(&self) -> &Arc<DofMap> {
        &self.dofmap
    }

    /// Field components and their gradients at barycentric point `lambda` of triangle `t`.
    pub fn eval(&self, t: usize, geom: &TriangleGeometry, lambda: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2]) {
        let kind = self.dofmap.kind();
        let mut phi = [0.0; 6];
        let mut dphi = [[0.0; 2]; 6];
        scalar_basis(kind, lambda, &geom.grad_lambda, &mut phi, &mut dphi);
        let dofs = self.dofmap.cell_dofs(t);
        let ncomp = kind.components();
        let mut value = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for a in 0..kind.scalar_local() {
            for c in 0..ncomp {
                let u = self.coeffs[dofs[ncomp * a + c]];
                value[c] += u * phi[a];
                grad[c][0] += u * dphi[a][0];
                grad[c][1] += u * dphi[a][1];
            }
        }
        (value, grad)
    }

    /// `(L2 norm, H1 seminorm)` by degree-6 quadrature.
    pub fn norms(&self) -> (f64, f64) {
        let rule = QuadratureRule::degree6();
        let mesh = self.dofmap.mesh();
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for t in 0..mesh.num_triangles() {
            let geom = self.dofmap.geometry(t);
            for (lambda, w) in rule.points.iter().zip(&rule.weights) {
                let (v, g) = self.eval(t, &geom, *lambda);
                let jw = geom.jacobian_weight(*w);
                l2 += jw * (v[0] * v[0] + v[1] * v[1]);
                h1 += jw * (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]);
            }
        }
        (l2.sqrt(), h1.sqrt())
    }

    pub fn l2_norm(&self) -> f64 {
        self.norms().0
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.norms().1
    }

    /// L2 distance to an analytic vector function (second component ignored for scalars).
    pub fn l2_error(&self, exact: impl Fn(Point) -> [f64; 2]) -> f64 {
        let rule = QuadratureRule::degree6();
        let mesh = self.dofmap.mesh();
        let ncomp = self.dofmap.components();
        let mut err = 0.0;
        for t in 0..mesh.num_triangles() {
            let geom = self.dofmap.geometry(t);
            for (lambda, w) in rule.points.iter().zip(&rule.weights) {
                let (v, _) = self.eval(t, &geom, *lambda);
                let e = exact(geom.map(*lambda));
                let mut d = (v[0] - e[0]).powi(2);
                if ncomp == 2 {
                    d += (v[1] - e[1]).powi(2);
                }
                err += geom.jacobian_weight(*w) * d;
            }
        }
        err.sqrt()
    }

    /// Values at mesh vertices (P1/P2), one entry per vertex.
    pub fn vertex_values(&self) -> Vec<[f64; 2]> {
        let ncomp = self.dofmap.components();
        (0..self.dofmap.mesh().num_vertices())
            .map(|v| {
                let mut out = [0.0; 2];
                for (c, slot) in out.iter_mut().enumerate().take(ncomp) {
                    *slot = self.coeffs[ncomp * v + c];
                }
                out
            })
            .collect()
    }

    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }
}

/// Nodal interpolant of a scalar function.
pub fn interpolate_scalar(dofmap: &Arc<DofMap>, f: impl Fn(Point, f64) -> f64, t: f64) -> Field {
    assert_eq!(dofmap.components(), 1, "scalar interpolation needs a scalar space");
    let coeffs = dofmap.node_coords().iter().map(|&p| f(p, t)).collect();
    Field { dofmap: dofmap.clone(), coeffs, time: Some(t) }
}

/// Nodal interpolant of a vector function.
pub fn interpolate_vector(dofmap: &Arc<DofMap>, f: impl Fn(Point, f64) -> [f64; 2], t: f64) -> Field {
    assert_eq!(dofmap.components(), 2, "vector interpolation needs a vector space");
    let coeffs = dofmap.node_coords().iter().flat_map(|&p| f(p, t)).collect();
    Field { dofmap: dofmap.clone(), coeffs, time: Some(t) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;

    fn space(n: usize, kind: ElementKind) -> Arc<DofMap> {
        Arc::new(build_dofmap(Arc::new(build_unit_square_mesh(n).unwrap()), kind))
    }

    #[test]
    fn dof_counts_on_minimal_mesh() {
        assert_eq!(space(1, ElementKind::P1).num_dofs(), 4);
        assert_eq!(space(1, ElementKind::P2).num_dofs(), 9);
        assert_eq!(space(1, ElementKind::P2Vector).num_dofs(), 18);
        assert_eq!(space(1, ElementKind::P0).num_dofs(), 2);
    }

    #[test]
    fn dof_counts_follow_mesh_entities() {
        for n in [2, 5, 8] {
            let mesh = Arc::new(build_unit_square_mesh(n).unwrap());
            let (nv, ne, nt) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_triangles());
            assert_eq!(build_dofmap(mesh.clone(), ElementKind::P1).num_dofs(), nv);
            assert_eq!(build_dofmap(mesh.clone(), ElementKind::P2).num_dofs(), nv + ne);
            assert_eq!(build_dofmap(mesh.clone(), ElementKind::P2Vector).num_dofs(), 2 * (nv + ne));
            assert_eq!(build_dofmap(mesh, ElementKind::P0).num_dofs(), nt);
        }
    }

    #[test]
    fn boundary_dofs_lie_on_boundary() {
        for kind in [ElementKind::P1, ElementKind::P2, ElementKind::P2Vector] {
            let dm = space(4, kind);
            for &(d, side) in dm.boundary_dofs() {
                assert!(side.contains(dm.dof_coord(d)), "{kind:?} dof {d} not on {side:?}");
            }
            // 4n boundary vertices (+4n edge midpoints for P2)
            let nodes = if kind == ElementKind::P1 { 16 } else { 32 };
            let all = dm.boundary_dofs_on(&Side::ALL);
            assert_eq!(all.len(), nodes * kind.components());
        }
    }

    #[test]
    fn numbering_is_deterministic() {
        let a = space(6, ElementKind::P2Vector);
        let b = space(6, ElementKind::P2Vector);
        assert_eq!(a.cell_dofs, b.cell_dofs);
        assert_eq!(a.boundary, b.boundary);
    }

    #[test]
    fn constant_interpolates_to_ones() {
        let dm = space(3, ElementKind::P1);
        let f = interpolate_scalar(&dm, |_, _| 1.0, 0.0);
        assert!(f.coeffs.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn nodal_values_of_manufactured_velocity() {
        let dm = space(4, ElementKind::P2Vector);
        let f = interpolate_vector(&dm, |p, _| [p[1].cos(), p[0].sin()], 0.0);
        for (a, p) in dm.node_coords().iter().enumerate() {
            assert!((f.coeffs[2 * a] - p[1].cos()).abs() < 1e-14);
            assert!((f.coeffs[2 * a + 1] - p[0].sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn polynomials_of_element_degree_are_reproduced() {
        let p1 = space(3, ElementKind::P1);
        let f = interpolate_scalar(&p1, |p, _| 2.0 * p[0] - p[1] + 0.5, 0.0);
        assert!(f.l2_error(|p| [2.0 * p[0] - p[1] + 0.5, 0.0]) < 1e-12);

        let p2 = space(3, ElementKind::P2);
        let f = interpolate_scalar(&p2, |p, _| p[0], 0.0);
        assert!(f.l2_error(|p| [p[0], 0.0]) < 1e-14);
        let q = |p: Point| p[0] * p[0] - 3.0 * p[0] * p[1] + p[1];
        let f = interpolate_scalar(&p2, |p, _| q(p), 0.0);
        assert!(f.l2_error(|p| [q(p), 0.0]) < 1e-12);
    }

    #[test]
    fn norms_of_simple_fields() {
        let p1 = space(4, ElementKind::P1);
        let zero = Field::zeros(p1.clone());
        assert_eq!(zero.norms(), (0.0, 0.0));
        let one = interpolate_scalar(&p1, |_, _| 1.0, 0.0);
        let (l2, h1) = one.norms();
        assert!((l2 - 1.0).abs() < 1e-12 && h1.abs() < 1e-12);
        let x = interpolate_scalar(&p1, |p, _| p[0], 0.0);
        let (l2, h1) = x.norms();
        assert!((l2 - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((h1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_length_rejected() {
        let dm = space(2, ElementKind::P1);
        assert!(Field::from_coeffs(dm, vec![0.0; 3]).is_err());
    }
}
