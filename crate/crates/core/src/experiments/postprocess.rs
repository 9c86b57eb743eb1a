use std::sync::Arc;

use serde::Serialize;

use crate::assembly::{assemble_mass, assemble_stiffness};
use crate::linsolve::{LinearSystem, SparseSolver};
use crate::mesh::{fmt_f64, Point, Side};
use crate::spaces::{build_dofmap, scalar_basis, DofMap, ElementKind, Field, QuadratureRule, TriangleGeometry};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallSide {
    /// `x = 0`
    Hot,
    /// `x = 1`
    Cold,
}

/// Local Nusselt number `-dT/dx` at the Gauss points of the wall edges,
/// ordered by `y`, with the quadrature weights for wall averages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NusseltProfile {
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NusseltProfile {
    pub fn average(&self) -> f64 {
        let length: f64 = self.weights.iter().sum();
        self.nu.iter().zip(&self.weights).map(|(n, w)| n * w).sum::<f64>() / length
    }

    pub fn sup_distance(&self, other: &NusseltProfile) -> Result<f64> {
        if self.y != other.y {
            return Err(Error::DimensionMismatch { expected: self.y.len(), found: other.y.len() });
        }
        Ok(self.nu.iter().zip(&other.nu).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,nu\n");
        for (y, n) in self.y.iter().zip(&self.nu) {
            out.push_str(&format!("{},{}\n", fmt_f64(*y), fmt_f64(*n)));
        }
        out
    }
}

fn barycentric(geom: &TriangleGeometry, p: Point) -> [f64; 3] {
    let mut lambda = [0.0; 3];
    for (i, l) in lambda.iter_mut().enumerate() {
        let v = geom.points[i];
        let g = geom.grad_lambda[i];
        // lambda_i is affine, equal to 1 at vertex i
        *l = 1.0 + g[0] * (p[0] - v[0]) + g[1] * (p[1] - v[1]);
    }
    lambda
}

/// Local Nusselt number on a vertical wall; conduction `T = 1 - x` gives 1 on both walls.
pub fn compute_nusselt(temperature: &Field, side: WallSide) -> NusseltProfile {
    let dofmap = temperature.dofmap();
    let mesh = dofmap.mesh();
    let wall = match side {
        WallSide::Hot => Side::Left,
        WallSide::Cold => Side::Right,
    };
    let (nodes, weights) = QuadratureRule::gauss_line(3);
    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    for &(e, s) in mesh.boundary_edges() {
        if s != wall {
            continue;
        }
        let edge = &mesh.edges()[e];
        let t = edge.triangles[0].expect("boundary edge has one triangle");
        let geom = dofmap.geometry(t);
        let a = mesh.vertices()[edge.vertices[0]];
        let b = mesh.vertices()[edge.vertices[1]];
        let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        for (s, w) in nodes.iter().zip(&weights) {
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let (_, grad) = temperature.eval(t, &geom, barycentric(&geom, p));
            samples.push((p[1], -grad[0][0], w * length));
        }
    }
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));
    NusseltProfile {
        y: samples.iter().map(|s| s.0).collect(),
        nu: samples.iter().map(|s| s.1).collect(),
        weights: samples.iter().map(|s| s.2).collect(),
    }
}

/// Wall-averaged Nusselt number on the hot wall.
pub fn wall_average(temperature: &Field) -> f64 {
    compute_nusselt(temperature, WallSide::Hot).average()
}

/// Vorticity `dw2/dx - dw1/dy` (L2-projected to P1) and the streamfunction
/// (P2) solving `-Lap psi = -vorticity` with `psi = 0` on the boundary, so
/// that `w = (-dpsi/dy, dpsi/dx)` for divergence-free `w` without normal flow.
pub fn compute_vorticity_stream(velocity: &Field) -> Result<(Field, Field)> {
    if velocity.dofmap().kind() != ElementKind::P2Vector {
        return Err(Error::Config("vorticity needs a P2 vector field".into()));
    }
    let mesh = velocity.dofmap().mesh().clone();
    let p1 = Arc::new(build_dofmap(mesh.clone(), ElementKind::P1));
    let p2 = Arc::new(build_dofmap(mesh, ElementKind::P2));
    let rule = QuadratureRule::degree6();
    let mut solver = SparseSolver::default();

    let curl_load = project_load(&p1, &rule, |t, geom, lambda| {
        let (_, g) = velocity.eval(t, geom, lambda);
        g[1][0] - g[0][1]
    });
    let vorticity = solver.solve(&assemble_mass(&p1), &curl_load)?.x;
    let vorticity = Field::from_coeffs(p1.clone(), vorticity)?;

    let rhs = project_load(&p2, &rule, |t, geom, lambda| -vorticity.eval(t, geom, lambda).0[0]);
    let constraints: Vec<(usize, f64)> = p2.boundary_dofs_on(&Side::ALL).into_iter().map(|d| (d, 0.0)).collect();
    let system = LinearSystem::new(assemble_stiffness(&p2, 1.0)?, rhs)?.apply_dirichlet(&constraints)?;
    let stream = solver.solve_system(&system)?.x;
    Ok((vorticity, Field::from_coeffs(p2, stream)?))
}

fn project_load(
    dofmap: &Arc<DofMap>,
    rule: &QuadratureRule,
    source: impl Fn(usize, &TriangleGeometry, [f64; 3]) -> f64,
) -> Vec<f64> {
    let kind = dofmap.kind();
    let mut load = vec![0.0; dofmap.num_dofs()];
    let mut phi = [0.0; 6];
    let mut dphi = [[0.0; 2]; 6];
    for t in 0..dofmap.mesh().num_triangles() {
        let geom = dofmap.geometry(t);
        let dofs = dofmap.cell_dofs(t);
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let value = source(t, &geom, *lambda) * geom.jacobian_weight(*w);
            scalar_basis(kind, *lambda, &geom.grad_lambda, &mut phi, &mut dphi);
            for a in 0..kind.scalar_local() {
                load[dofs[a]] += value * phi[a];
            }
        }
    }
    load
}
