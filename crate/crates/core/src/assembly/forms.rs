//! Element kernels for the bilinear and linear forms of the flow and heat equations.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::sparse::{SparseOperator, Structure};
use crate::mesh::Point;
use crate::spaces::{scalar_basis, DofMap, ElementKind, Field, QuadratureRule, TriangleGeometry};
use crate::{Error, Result};

/// Element-to-global scatter map for one (row space, column space) pair.
#[derive(Debug)]
pub struct ElementPattern {
    row: Arc<DofMap>,
    col: Arc<DofMap>,
    structure: Arc<Structure>,
    scatter: Vec<usize>,
}

impl ElementPattern {
    pub fn new(row: &Arc<DofMap>, col: &Arc<DofMap>) -> ElementPattern {
        assert!(Arc::ptr_eq(row.mesh(), col.mesh()), "row and column spaces must share a mesh");
        let nt = row.mesh().num_triangles();
        let keys = (0..nt).flat_map(|t| {
            let rd = row.cell_dofs(t);
            let cd = col.cell_dofs(t);
            rd.iter().flat_map(move |&r| cd.iter().map(move |&c| (r, c)))
        });
        let structure = Arc::new(Structure::from_keys(row.num_dofs(), col.num_dofs(), keys));
        let mut scatter = Vec::new();
        for t in 0..nt {
            for &r in row.cell_dofs(t) {
                for &c in col.cell_dofs(t) {
                    scatter.push(structure.find(r, c).expect("key present by construction"));
                }
            }
        }
        ElementPattern { row: row.clone(), col: col.clone(), structure, scatter }
    }

    pub fn structure(&self) -> &Arc<Structure> {
        &self.structure
    }

    /// Accumulates row-major local matrices element by element, in element order.
    pub fn assemble(&self, mut kernel: impl FnMut(usize, &TriangleGeometry, &mut [f64])) -> SparseOperator {
        let nr = self.row.kind().local_dofs();
        let nc = self.col.kind().local_dofs();
        let mut op = SparseOperator::zeros(self.structure.clone());
        let mut local = vec![0.0; nr * nc];
        for t in 0..self.row.mesh().num_triangles() {
            local.iter_mut().for_each(|x| *x = 0.0);
            let geom = self.row.geometry(t);
            kernel(t, &geom, &mut local);
            let slots = &self.scatter[t * nr * nc..(t + 1) * nr * nc];
            for (k, v) in slots.iter().zip(&local) {
                op.values[*k] += v;
            }
        }
        op
    }
}

/// Scalar basis values, gradients and physical weights at every quadrature point.
struct QuadPoint {
    phi: [f64; 6],
    dphi: [[f64; 2]; 6],
    weight: f64,
    lambda: [f64; 3],
}

fn quad_points(kind: ElementKind, geom: &TriangleGeometry, rule: &QuadratureRule) -> Vec<QuadPoint> {
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(lambda, w)| {
            let mut phi = [0.0; 6];
            let mut dphi = [[0.0; 2]; 6];
            scalar_basis(kind, *lambda, &geom.grad_lambda, &mut phi, &mut dphi);
            QuadPoint { phi, dphi, weight: geom.jacobian_weight(*w), lambda: *lambda }
        })
        .collect()
}

/// Writes a scalar local matrix `s` (n x n) into `local` for a space with
/// `ncomp` interleaved components: entry `(ncomp a + c, ncomp b + c) = s_ab`.
fn expand_diagonal(s: &[f64], n: usize, ncomp: usize, local: &mut [f64]) {
    let width = n * ncomp;
    for a in 0..n {
        for b in 0..n {
            for c in 0..ncomp {
                local[(ncomp * a + c) * width + ncomp * b + c] = s[a * n + b];
            }
        }
    }
}

fn scalar_local_mass(kind: ElementKind, qps: &[QuadPoint], out: &mut [f64]) {
    let n = kind.scalar_local();
    for a in 0..n {
        for b in a..n {
            let v: f64 = qps.iter().map(|q| q.weight * q.phi[a] * q.phi[b]).sum();
            out[a * n + b] = v;
            out[b * n + a] = v;
        }
    }
}

/// `(u, w)` on any space (block diagonal for vector spaces).
pub fn assemble_mass(dofmap: &Arc<DofMap>) -> SparseOperator {
    let kind = dofmap.kind();
    let rule = QuadratureRule::degree6();
    let n = kind.scalar_local();
    let mut s = vec![0.0; n * n];
    ElementPattern::new(dofmap, dofmap).assemble(|_, geom, local| {
        let qps = quad_points(kind, geom, &rule);
        scalar_local_mass(kind, &qps, &mut s);
        expand_diagonal(&s, n, kind.components(), local);
    })
}

/// `nu (grad u, grad w)`.
pub fn assemble_stiffness(dofmap: &Arc<DofMap>, nu: f64) -> Result<SparseOperator> {
    if !(nu > 0.0) {
        return Err(Error::Config(format!("stiffness coefficient must be positive, got {nu}")));
    }
    let kind = dofmap.kind();
    let rule = QuadratureRule::degree6();
    let n = kind.scalar_local();
    let mut s = vec![0.0; n * n];
    Ok(ElementPattern::new(dofmap, dofmap).assemble(|_, geom, local| {
        let qps = quad_points(kind, geom, &rule);
        for a in 0..n {
            for b in a..n {
                let v = nu
                    * qps
                        .iter()
                        .map(|q| q.weight * (q.dphi[a][0] * q.dphi[b][0] + q.dphi[a][1] * q.dphi[b][1]))
                        .sum::<f64>();
                s[a * n + b] = v;
                s[b * n + a] = v;
            }
        }
        expand_diagonal(&s, n, kind.components(), local);
    }))
}

/// `B[q, v] = (div v, q)` with pressure rows and velocity columns.
pub fn assemble_divergence(velocity: &Arc<DofMap>, pressure: &Arc<DofMap>) -> SparseOperator {
    assert_eq!(velocity.kind(), ElementKind::P2Vector);
    let pk = pressure.kind();
    let rule = QuadratureRule::degree6();
    let np = pk.scalar_local();
    ElementPattern::new(pressure, velocity).assemble(|_, geom, local| {
        let vq = quad_points(ElementKind::P2, geom, &rule);
        let pq = quad_points(pk, geom, &rule);
        for k in 0..np {
            for a in 0..6 {
                for c in 0..2 {
                    local[k * 12 + 2 * a + c] =
                        vq.iter().zip(&pq).map(|(v, p)| v.weight * v.dphi[a][c] * p.phi[k]).sum();
                }
            }
        }
    })
}

/// Skew-symmetrized convection `b*(a, v, w) = 1/2 (a.grad v, w) - 1/2 (a.grad w, v)`
/// for a fixed advecting velocity `a`, acting on a scalar or vector space.
///
/// The pattern is cached so repeated assembly (once per time step) only
/// recomputes element values.
#[derive(Debug)]
pub struct ConvectionAssembler {
    dofmap: Arc<DofMap>,
    pattern: ElementPattern,
}

impl ConvectionAssembler {
    pub fn new(dofmap: &Arc<DofMap>) -> ConvectionAssembler {
        ConvectionAssembler { dofmap: dofmap.clone(), pattern: ElementPattern::new(dofmap, dofmap) }
    }

    pub fn assemble(&self, advecting: &Field) -> SparseOperator {
        assert_eq!(advecting.dofmap().kind(), ElementKind::P2Vector, "advecting field must be a P2 velocity");
        assert!(Arc::ptr_eq(advecting.dofmap().mesh(), self.dofmap.mesh()));
        let kind = self.dofmap.kind();
        let rule = QuadratureRule::degree6();
        let n = kind.scalar_local();
        let mut c = vec![0.0; n * n];
        let mut s = vec![0.0; n * n];
        self.pattern.assemble(|t, geom, local| {
            let qps = quad_points(kind, geom, &rule);
            let wind: Vec<[f64; 2]> = qps.iter().map(|q| advecting.eval(t, geom, q.lambda).0).collect();
            for a in 0..n {
                for b in 0..n {
                    c[a * n + b] = qps
                        .iter()
                        .zip(&wind)
                        .map(|(q, w)| q.weight * (w[0] * q.dphi[b][0] + w[1] * q.dphi[b][1]) * q.phi[a])
                        .sum();
                }
            }
            for a in 0..n {
                for b in 0..n {
                    s[a * n + b] = 0.5 * (c[a * n + b] - c[b * n + a]);
                }
            }
            expand_diagonal(&s, n, kind.components(), local);
        })
    }
}

pub fn assemble_convection(advecting: &Field, dofmap: &Arc<DofMap>) -> SparseOperator {
    ConvectionAssembler::new(dofmap).assemble(advecting)
}

/// Rotation `R(u) = (-u_2, u_1)`: `w^T C v = (R(v), w)`.
pub fn assemble_coriolis(velocity: &Arc<DofMap>) -> SparseOperator {
    assert_eq!(velocity.kind(), ElementKind::P2Vector);
    let rule = QuadratureRule::degree6();
    let mut m = vec![0.0; 36];
    ElementPattern::new(velocity, velocity).assemble(|_, geom, local| {
        let qps = quad_points(ElementKind::P2, geom, &rule);
        scalar_local_mass(ElementKind::P2, &qps, &mut m);
        for a in 0..6 {
            for b in 0..6 {
                // row (a, x) pairs with -v_2; row (a, y) with +v_1
                local[(2 * a) * 12 + 2 * b + 1] = -m[a * 6 + b];
                local[(2 * a + 1) * 12 + 2 * b] = m[a * 6 + b];
            }
        }
    })
}

/// Load vector `(f(., t), w)` for a vector space.
pub fn assemble_forcing(f: impl Fn(Point, f64) -> [f64; 2], t: f64, dofmap: &Arc<DofMap>) -> Vec<f64> {
    assemble_load(dofmap, |_, geom, q| f(geom.map(q.lambda), t))
}

/// Load vector `(g(., t), s)` for a scalar space.
pub fn assemble_scalar_source(g: impl Fn(Point, f64) -> f64, t: f64, dofmap: &Arc<DofMap>) -> Vec<f64> {
    assemble_load(dofmap, |_, geom, q| [g(geom.map(q.lambda), t), 0.0])
}

/// Buoyancy load `(Pr Ra T g, w)`.
pub fn assemble_buoyancy(temperature: &Field, pr: f64, ra: f64, gravity: [f64; 2], velocity: &Arc<DofMap>) -> Vec<f64> {
    assert!(Arc::ptr_eq(temperature.dofmap().mesh(), velocity.mesh()));
    let scale = pr * ra;
    assemble_load(velocity, |t, geom, q| {
        let temp = temperature.eval(t, geom, q.lambda).0[0];
        [scale * temp * gravity[0], scale * temp * gravity[1]]
    })
}

fn assemble_load(dofmap: &Arc<DofMap>, source: impl Fn(usize, &TriangleGeometry, &QuadPoint) -> [f64; 2]) -> Vec<f64> {
    let kind = dofmap.kind();
    let ncomp = kind.components();
    let rule = QuadratureRule::degree6();
    let mut load = vec![0.0; dofmap.num_dofs()];
    for t in 0..dofmap.mesh().num_triangles() {
        let geom = dofmap.geometry(t);
        let qps = quad_points(kind, &geom, &rule);
        let values: Vec<[f64; 2]> = qps.iter().map(|q| source(t, &geom, q)).collect();
        let dofs = dofmap.cell_dofs(t);
        for a in 0..kind.scalar_local() {
            for c in 0..ncomp {
                let contrib: f64 = qps.iter().zip(&values).map(|(q, v)| q.weight * v[c] * q.phi[a]).sum();
                load[dofs[ncomp * a + c]] += contrib;
            }
        }
    }
    load
}

/// Discrete inf-sup constant of a velocity/pressure pair with no-slip velocity,
/// from the smallest nonzero generalized eigenvalue of `B K^{-1} B^T q = mu M_p q`.
///
/// Dense; intended for small meshes.
pub fn inf_sup_constant(velocity: &Arc<DofMap>, pressure: &Arc<DofMap>) -> Result<f64> {
    let stiffness = assemble_stiffness(velocity, 1.0)?;
    let div = assemble_divergence(velocity, pressure);
    let mass_p = assemble_mass(pressure);

    let boundary = velocity.boundary_dofs_on(&crate::mesh::Side::ALL);
    let mut interior_index = vec![usize::MAX; velocity.num_dofs()];
    let mut ni = 0;
    for (d, slot) in interior_index.iter_mut().enumerate() {
        if boundary.binary_search(&d).is_err() {
            *slot = ni;
            ni += 1;
        }
    }
    let np = pressure.num_dofs();
    let mut k = DMatrix::<f64>::zeros(ni, ni);
    for (r, c, v) in stiffness.iter() {
        let (ri, ci) = (interior_index[r], interior_index[c]);
        if ri != usize::MAX && ci != usize::MAX {
            k[(ri, ci)] += v;
        }
    }
    let mut b = DMatrix::<f64>::zeros(np, ni);
    for (r, c, v) in div.iter() {
        let ci = interior_index[c];
        if ci != usize::MAX {
            b[(r, ci)] += v;
        }
    }
    let mut m = DMatrix::<f64>::zeros(np, np);
    for (r, c, v) in mass_p.iter() {
        m[(r, c)] += v;
    }

    let k_chol = k.cholesky().ok_or_else(|| Error::Solver("velocity stiffness not SPD".into()))?;
    let kinv_bt = k_chol.solve(&b.transpose());
    let schur = &b * kinv_bt;
    let m_chol = m.cholesky().ok_or_else(|| Error::Solver("pressure mass not SPD".into()))?;
    let l = m_chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Solver("singular mass factor".into()))?;
    let sym = &linv * schur * linv.transpose();
    let sym = 0.5 * (&sym + sym.transpose());
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    // eig[0] belongs to the constant pressure mode
    let smallest = eig.get(1).copied().ok_or_else(|| Error::Solver("pressure space too small".into()))?;
    Ok(smallest.max(0.0).sqrt())
}
