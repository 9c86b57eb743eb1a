//! Sparse direct solves with Dirichlet elimination.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::Mat;

use crate::assembly::{SparseOperator, Structure};
use crate::{Error, Result};

/// Default bound on `||Ax - b||_2 / ||b||_2`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: SparseOperator,
    pub rhs: Vec<f64>,
    /// Constrained dofs and their prescribed values, as eliminated so far.
    pub constraints: Vec<(usize, f64)>,
}

impl LinearSystem {
    pub fn new(matrix: SparseOperator, rhs: Vec<f64>) -> Result<LinearSystem> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        if rhs.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: rhs.len() });
        }
        Ok(LinearSystem { matrix, rhs, constraints: Vec::new() })
    }

    /// Symmetric elimination: constrained rows and columns are zeroed, the
    /// diagonal set to one, and the prescribed values moved to the right-hand side.
    /// The sparsity structure is left untouched so factorizations can be reused.
    pub fn apply_dirichlet(mut self, constraints: &[(usize, f64)]) -> Result<LinearSystem> {
        let n = self.rhs.len();
        let mut value: Vec<Option<f64>> = vec![None; n];
        for &(dof, g) in self.constraints.iter().chain(constraints) {
            if dof >= n {
                return Err(Error::Config(format!("constrained dof {dof} out of range (system size {n})")));
            }
            match value[dof] {
                Some(prev) if prev != g => {
                    return Err(Error::Config(format!("conflicting constraints on dof {dof}: {prev} vs {g}")));
                }
                _ => value[dof] = Some(g),
            }
        }
        let structure = self.matrix.structure().clone();
        for (dof, v) in value.iter().enumerate() {
            if v.is_some() && structure.find(dof, dof).is_none() {
                return Err(Error::Solver(format!("constrained dof {dof} has no diagonal entry")));
            }
        }
        for r in 0..n {
            for k in structure.indptr[r]..structure.indptr[r + 1] {
                let c = structure.indices[k];
                match (value[r], value[c]) {
                    (None, None) => {}
                    (None, Some(g)) => {
                        self.rhs[r] -= self.matrix.values[k] * g;
                        self.matrix.values[k] = 0.0;
                    }
                    (Some(_), _) => self.matrix.values[k] = if r == c { 1.0 } else { 0.0 },
                }
            }
        }
        for (dof, v) in value.iter().enumerate() {
            if let Some(g) = v {
                self.rhs[dof] = *g;
            }
        }
        self.constraints = value.iter().enumerate().filter_map(|(d, v)| v.map(|g| (d, g))).collect();
        Ok(self)
    }

    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        relative_residual(&self.matrix, x, &self.rhs)
    }
}

pub fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let nb = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    pub relative_residual: f64,
}

/// Sparse LU solver that keeps the symbolic factorization while the matrix
/// structure stays the same.
pub struct SparseSolver {
    tolerance: f64,
    symbolic: Option<(Arc<Structure>, SymbolicLu<usize>)>,
}

impl std::fmt::Debug for SparseSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseSolver")
            .field("tolerance", &self.tolerance)
            .field("has_symbolic", &self.symbolic.is_some())
            .finish()
    }
}

impl Default for SparseSolver {
    fn default() -> Self {
        SparseSolver::new(RESIDUAL_TOLERANCE)
    }
}

impl SparseSolver {
    pub fn new(tolerance: f64) -> SparseSolver {
        SparseSolver { tolerance, symbolic: None }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn solve_system(&mut self, system: &LinearSystem) -> Result<Solution> {
        self.solve(&system.matrix, &system.rhs)
    }

    pub fn solve(&mut self, a: &SparseOperator, b: &[f64]) -> Result<Solution> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: if a.ncols() != n { a.ncols() } else { b.len() } });
        }
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite entries in linear system".into()));
        }
        let mat = a.to_faer()?;
        let reuse = matches!(&self.symbolic, Some((s, _)) if Arc::ptr_eq(s, a.structure()));
        if !reuse {
            let symbolic = SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
            self.symbolic = Some((a.structure().clone(), symbolic));
        }
        let symbolic = self.symbolic.as_ref().map(|(_, s)| s.clone()).expect("symbolic factorization present");
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| Error::Solver(format!("singular or failed factorization: {e:?}")))?;

        let solve = |rhs: &[f64]| -> Vec<f64> {
            let mut m = Mat::from_fn(n, 1, |i, _| rhs[i]);
            lu.solve_in_place(m.as_mut());
            m.col_as_slice(0).to_vec()
        };
        let mut x = solve(b);
        let mut residual = relative_residual(a, &x, b);
        for _ in 0..3 {
            if !(residual > 1e-3 * self.tolerance) {
                break;
            }
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = solve(&r);
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(p, q)| p + q).collect();
            let next = relative_residual(a, &candidate, b);
            if !(next < residual) {
                break;
            }
            x = candidate;
            residual = next;
        }
        if !residual.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("singular matrix: non-finite solution".into()));
        }
        if residual > self.tolerance {
            return Err(Error::Solver(format!(
                "relative residual {residual:.3e} exceeds tolerance {:.1e}",
                self.tolerance
            )));
        }
        Ok(Solution { x, relative_residual: residual })
    }
}

/// Shifts `p` (in place) to zero mean with respect to the mass matrix `m`;
/// returns the removed mean.
pub fn remove_mean(p: &mut [f64], mass: &SparseOperator) -> f64 {
    let ones = vec![1.0; p.len()];
    let area = mass.bilinear(&ones, &ones);
    let mean = mass.bilinear(&ones, p) / area;
    for v in p.iter_mut() {
        *v -= mean;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> SparseOperator {
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                if *v != 0.0 {
                    t.push((i, j, *v));
                }
            }
        }
        SparseOperator::from_triplets(rows.len(), rows[0].len(), &t)
    }

    #[test]
    fn identity_returns_rhs() {
        let mut s = SparseSolver::default();
        let b = vec![1.0, -2.0, 3.5];
        let x = s.solve(&SparseOperator::identity(3), &b).unwrap().x;
        assert_eq!(x, b);
    }

    #[test]
    fn spd_two_by_two() {
        let mut s = SparseSolver::default();
        let sol = s.solve(&dense(&[&[2.0, 1.0], &[1.0, 2.0]]), &[1.0, 0.0]).unwrap();
        assert!((sol.x[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((sol.x[1] + 1.0 / 3.0).abs() < 1e-15);
        assert!(sol.relative_residual <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn three_point_laplacian_with_fixed_ends() {
        // [1 -1 0; -1 2 -1; 0 -1 1] with ends fixed to 0 and unit load: 2 u1 = 1
        let a = dense(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]]);
        let sys = LinearSystem::new(a, vec![1.0; 3]).unwrap().apply_dirichlet(&[(0, 0.0), (2, 0.0)]).unwrap();
        let x = SparseSolver::default().solve_system(&sys).unwrap().x;
        assert_eq!(x[0], 0.0);
        assert_eq!(x[2], 0.0);
        assert!((x[1] - 0.5).abs() < 1e-15);
        // nonzero data moves to the load and stays symmetric
        let a = dense(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]]);
        let sys = LinearSystem::new(a, vec![0.0; 3]).unwrap().apply_dirichlet(&[(0, 1.0), (2, 3.0)]).unwrap();
        assert_eq!(sys.matrix.max_transpose_defect(1.0), 0.0);
        let x = SparseSolver::default().solve_system(&sys).unwrap().x;
        assert!((x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn no_constraints_is_identity_transform() {
        let a = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let sys = LinearSystem::new(a.clone(), vec![1.0, 2.0]).unwrap().apply_dirichlet(&[]).unwrap();
        assert_eq!(sys.matrix.values, a.values);
        assert_eq!(sys.rhs, vec![1.0, 2.0]);
    }

    #[test]
    fn fully_constrained_returns_values() {
        let a = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let sys = LinearSystem::new(a, vec![5.0, 5.0]).unwrap().apply_dirichlet(&[(0, 0.25), (1, -7.0)]).unwrap();
        let x = SparseSolver::default().solve_system(&sys).unwrap().x;
        assert_eq!(x, vec![0.25, -7.0]);
    }

    #[test]
    fn conflicting_constraints_rejected() {
        let a = SparseOperator::identity(2);
        let sys = LinearSystem::new(a, vec![0.0; 2]).unwrap();
        assert!(sys.clone().apply_dirichlet(&[(0, 1.0), (0, 2.0)]).is_err());
        assert!(sys.clone().apply_dirichlet(&[(0, 1.0), (0, 1.0)]).is_ok());
        assert!(sys.apply_dirichlet(&[(2, 1.0)]).is_err());
    }

    #[test]
    fn singular_matrix_is_an_error() {
        let a = dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(SparseSolver::default().solve(&a, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn symbolic_factorization_is_reused() {
        let mut a = dense(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let mut s = SparseSolver::default();
        let x1 = s.solve(&a, &[1.0, 2.0]).unwrap().x;
        a.values.iter_mut().for_each(|v| *v *= 2.0);
        let x2 = s.solve(&a, &[1.0, 2.0]).unwrap().x;
        assert!((x1[0] - 2.0 * x2[0]).abs() < 1e-15);
    }
}
