use std::sync::Arc;

use faer::sparse::{SparseColMat, Triplet};

use crate::{Error, Result};

/// Row-compressed sparsity structure, shared between operators with the same pattern.
#[derive(Debug, PartialEq, Eq)]
pub struct Structure {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
}

impl Structure {
    /// Builds the structure from (row, col) keys; duplicates are merged.
    pub fn from_keys(nrows: usize, ncols: usize, keys: impl IntoIterator<Item = (usize, usize)>) -> Structure {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for (r, c) in keys {
            debug_assert!(r < nrows && c < ncols);
            rows[r].push(c);
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            indices.extend(row);
            indptr.push(indices.len());
        }
        Structure { nrows, ncols, indptr, indices }
    }

    /// Position of `(row, col)` in the value array.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.indptr[row], self.indptr[row + 1]);
        self.indices[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Compressed sparse matrix with assembly-by-accumulation semantics.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    structure: Arc<Structure>,
    pub values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(structure: Arc<Structure>) -> SparseOperator {
        let n = structure.nnz();
        SparseOperator { structure, values: vec![0.0; n] }
    }

    /// Duplicate entries are summed in input order, so the result is
    /// independent of anything but the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> SparseOperator {
        let structure = Arc::new(Structure::from_keys(nrows, ncols, triplets.iter().map(|&(r, c, _)| (r, c))));
        let mut op = SparseOperator::zeros(structure);
        for &(r, c, v) in triplets {
            let k = op.structure.find(r, c).expect("key present by construction");
            op.values[k] += v;
        }
        op
    }

    pub fn identity(n: usize) -> SparseOperator {
        SparseOperator::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn structure(&self) -> &Arc<Structure> {
        &self.structure
    }

    pub fn nrows(&self) -> usize {
        self.structure.nrows
    }

    pub fn ncols(&self) -> usize {
        self.structure.ncols
    }

    pub fn nnz(&self) -> usize {
        self.structure.nnz()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.structure.find(row, col).map_or(0.0, |k| self.values[k])
    }

    /// Iterates stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let s = &self.structure;
        (0..s.nrows).flat_map(move |r| (s.indptr[r]..s.indptr[r + 1]).map(move |k| (r, s.indices[k], self.values[k])))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        let s = &self.structure;
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in s.indptr[r]..s.indptr[r + 1] {
                acc += self.values[k] * x[s.indices[k]];
            }
            *out = acc;
        }
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows());
        let mut y = vec![0.0; self.ncols()];
        for (r, c, v) in self.iter() {
            y[c] += v * x[r];
        }
        y
    }

    /// `w^T A v`.
    pub fn bilinear(&self, w: &[f64], v: &[f64]) -> f64 {
        self.matvec(v).iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> SparseOperator {
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        SparseOperator::from_triplets(self.ncols(), self.nrows(), &triplets)
    }

    pub fn scaled(&self, a: f64) -> SparseOperator {
        SparseOperator { structure: self.structure.clone(), values: self.values.iter().map(|v| a * v).collect() }
    }

    /// `self += a * other`; both must share a structure.
    pub fn add_scaled(&mut self, a: f64, other: &SparseOperator) -> Result<()> {
        if !Arc::ptr_eq(&self.structure, &other.structure) && *self.structure != *other.structure {
            return Err(Error::Solver("operators have different sparsity structures".into()));
        }
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    /// `max |A_ij - sign * A_ji|`, e.g. `sign = 1` for symmetry, `-1` for antisymmetry.
    pub fn max_transpose_defect(&self, sign: f64) -> f64 {
        self.iter().map(|(r, c, v)| (v - sign * self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
        }
        d
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows(), self.ncols(), &triplets)
            .map_err(|e| Error::Solver(format!("cannot build sparse matrix: {e:?}")))
    }
}

/// Incremental builder for operators assembled from dense blocks, such as the
/// saddle-point systems of the time steppers. The block layout is fixed once,
/// after which values are refreshed with [`BlockAssembler::fill`].
#[derive(Debug)]
pub struct BlockAssembler {
    structure: Arc<Structure>,
    blocks: Vec<BlockSlot>,
}

#[derive(Debug)]
struct BlockSlot {
    // map from the block's value index to the combined value index
    target: Vec<usize>,
}

impl BlockAssembler {
    /// `blocks` are `(row offset, col offset, operator)`; operators placed in the
    /// same slot later must share the structure given here.
    pub fn new(nrows: usize, ncols: usize, blocks: &[(usize, usize, &SparseOperator)]) -> BlockAssembler {
        let keys = blocks.iter().flat_map(|&(r0, c0, op)| op.iter().map(move |(r, c, _)| (r0 + r, c0 + c)));
        let structure = Arc::new(Structure::from_keys(nrows, ncols, keys));
        let blocks = blocks
            .iter()
            .map(|&(r0, c0, op)| BlockSlot {
                target: op
                    .iter()
                    .map(|(r, c, _)| structure.find(r0 + r, c0 + c).expect("key present by construction"))
                    .collect(),
            })
            .collect();
        BlockAssembler { structure, blocks }
    }

    /// Sums `scale * operator` into slot `i` for each `(i, scale, operator)`.
    pub fn fill(&self, terms: &[(usize, f64, &SparseOperator)]) -> SparseOperator {
        let mut out = SparseOperator::zeros(self.structure.clone());
        for &(slot, scale, op) in terms {
            let target = &self.blocks[slot].target;
            assert_eq!(target.len(), op.nnz(), "operator does not match block slot {slot}");
            for (k, v) in target.iter().zip(&op.values) {
                out.values[*k] += scale * v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_accumulate() {
        let a = SparseOperator::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let a = SparseOperator::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(a.matvec(&x), vec![7.0, 6.0]);
        let y = [1.0, -1.0];
        assert_eq!(a.matvec_transpose(&y), a.transpose().matvec(&y));
        assert_eq!(a.bilinear(&y, &x), 1.0);
    }

    #[test]
    fn block_fill_places_blocks() {
        let a = SparseOperator::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 1, 5.0)]);
        let b = SparseOperator::from_triplets(1, 2, &[(0, 0, 3.0), (0, 1, 4.0)]);
        let bt = b.transpose();
        let asm = BlockAssembler::new(3, 3, &[(0, 0, &a), (2, 0, &b), (0, 2, &bt)]);
        let m = asm.fill(&[(0, 2.0, &a), (1, 1.0, &b), (2, -1.0, &bt), (0, 1.0, &a)]);
        let d = m.to_dense();
        assert_eq!(d, vec![vec![3.0, 15.0, -3.0], vec![0.0, 6.0, -4.0], vec![3.0, 4.0, 0.0]]);
    }

    #[test]
    fn structure_mismatch_rejected() {
        let mut a = SparseOperator::identity(2);
        let b = SparseOperator::from_triplets(2, 2, &[(0, 1, 1.0)]);
        assert!(a.add_scaled(1.0, &b).is_err());
    }
}
