//! Coarse-mesh observations: the L2 projection onto piecewise constants
//! (`I_H`) and the nudging term built from it.
//!
//! Fine triangles are attached to the coarse cell containing their
//! barycenter, and a coarse cell's measure is the total area of its fine
//! triangles. The projection is therefore an exact orthogonal projection on
//! the fine mesh even when the meshes are not nested.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::assembly::SparseOperator;
use crate::mesh::{build_cell_map, build_unit_square_mesh, fmt_f64, CellMap, Mesh, Point};
use crate::spaces::{scalar_basis, DofMap, ElementKind, Field, QuadratureRule};
use crate::{Error, Result};

#[derive(Debug)]
pub struct ObservationOperator {
    velocity: Arc<DofMap>,
    coarse: Arc<Mesh>,
    coarse_n: usize,
    cell_map: CellMap,
    cell_areas: Vec<f64>,
    /// `P`: rows `2 K + c` hold the cell-mean functional of component `c` on cell `K`.
    projection: SparseOperator,
}

pub fn build_observation(velocity: &Arc<DofMap>, coarse_n: usize) -> Result<ObservationOperator> {
    if velocity.kind() != ElementKind::P2Vector {
        return Err(Error::Config("observations act on the P2 velocity space".into()));
    }
    let fine = velocity.mesh();
    let coarse = Arc::new(build_unit_square_mesh(coarse_n)?);
    if coarse.num_triangles() > fine.num_triangles() {
        return Err(Error::Config(format!(
            "coarse observation mesh (n = {coarse_n}) is finer than the simulation mesh"
        )));
    }
    let cell_map = build_cell_map(fine, &coarse)?;
    let mut cell_areas = vec![0.0; coarse.num_triangles()];
    for (f, &c) in cell_map.coarse_of_fine.iter().enumerate() {
        cell_areas[c] += fine.area(f);
    }
    if let Some(k) = cell_areas.iter().position(|&a| a <= 0.0) {
        return Err(Error::Config(format!("coarse cell {k} receives no fine triangles")));
    }

    let rule = QuadratureRule::degree6();
    let mut triplets = Vec::new();
    for (t, &cell) in cell_map.coarse_of_fine.iter().enumerate() {
        let geom = velocity.geometry(t);
        let mut integrals = [0.0; 6];
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let mut phi = [0.0; 6];
            let mut dphi = [[0.0; 2]; 6];
            scalar_basis(ElementKind::P2, *lambda, &geom.grad_lambda, &mut phi, &mut dphi);
            for a in 0..6 {
                integrals[a] += geom.jacobian_weight(*w) * phi[a];
            }
        }
        let dofs = velocity.cell_dofs(t);
        for a in 0..6 {
            for c in 0..2 {
                triplets.push((2 * cell + c, dofs[2 * a + c], integrals[a] / cell_areas[cell]));
            }
        }
    }
    let projection = SparseOperator::from_triplets(2 * coarse.num_triangles(), velocity.num_dofs(), &triplets);
    Ok(ObservationOperator { velocity: velocity.clone(), coarse, coarse_n, cell_map, cell_areas, projection })
}

impl ObservationOperator {
    pub fn num_cells(&self) -> usize {
        self.cell_areas.len()
    }

    pub fn coarse_mesh(&self) -> &Arc<Mesh> {
        &self.coarse
    }

    pub fn cell_map(&self) -> &CellMap {
        &self.cell_map
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    /// Nominal coarse width `H = 1 / coarse_n`.
    pub fn coarse_width(&self) -> f64 {
        1.0 / self.coarse_n as f64
    }

    /// Largest coarse cell diameter (the hypotenuse, `sqrt(2) H`).
    pub fn coarse_diameter(&self) -> f64 {
        self.coarse.max_edge_length()
    }

    pub fn projection(&self) -> &SparseOperator {
        &self.projection
    }

    /// Cell means of a velocity field, flattened as `[2 K + c]`.
    pub fn apply(&self, v: &Field) -> Result<Vec<f64>> {
        if !Arc::ptr_eq(v.dofmap(), &self.velocity) && v.coeffs.len() != self.velocity.num_dofs() {
            return Err(Error::DimensionMismatch { expected: self.velocity.num_dofs(), found: v.coeffs.len() });
        }
        self.apply_coeffs(&v.coeffs)
    }

    pub fn apply_coeffs(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.velocity.num_dofs() {
            return Err(Error::DimensionMismatch { expected: self.velocity.num_dofs(), found: coeffs.len() });
        }
        Ok(self.projection.matvec(coeffs))
    }

    /// Per-cell 2-vectors, the `apply_IH` view.
    pub fn apply_cells(&self, v: &Field) -> Result<Vec<[f64; 2]>> {
        Ok(self.apply(v)?.chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    /// `(a, b)` for piecewise-constant coarse functions given by their cell values.
    pub fn coarse_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_areas
            .iter()
            .enumerate()
            .map(|(k, area)| area * (a[2 * k] * b[2 * k] + a[2 * k + 1] * b[2 * k + 1]))
            .sum()
    }

    pub fn coarse_norm(&self, a: &[f64]) -> f64 {
        self.coarse_inner(a, a).sqrt()
    }

    /// Exact cell means of an analytic velocity, by fine-mesh quadrature.
    pub fn means_of(&self, u: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let rule = QuadratureRule::degree6();
        let mut sums = vec![0.0; 2 * self.num_cells()];
        for (t, &cell) in self.cell_map.coarse_of_fine.iter().enumerate() {
            let geom = self.velocity.geometry(t);
            for (lambda, w) in rule.points.iter().zip(&rule.weights) {
                let value = u(geom.map(*lambda));
                let jw = geom.jacobian_weight(*w);
                sums[2 * cell] += jw * value[0];
                sums[2 * cell + 1] += jw * value[1];
            }
        }
        for (k, area) in self.cell_areas.iter().enumerate() {
            sums[2 * k] /= area;
            sums[2 * k + 1] /= area;
        }
        sums
    }

    /// Nudging operator `G = chi P^T M_H P` (explicit; the steppers use the
    /// factored form through [`ObservationOperator::projection`]).
    pub fn assemble_nudging(&self, chi: f64) -> Result<NudgingTerm<'_>> {
        if !(chi >= 0.0) {
            return Err(Error::Config(format!("nudging parameter must be nonnegative, got {chi}")));
        }
        let p = &self.projection;
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.nrows()];
        for (r, c, v) in p.iter() {
            by_row[r].push((c, v));
        }
        let mut triplets = Vec::new();
        if chi > 0.0 {
            for (r, row) in by_row.iter().enumerate() {
                let weight = chi * self.cell_areas[r / 2];
                for &(i, pi) in row {
                    for &(j, pj) in row {
                        triplets.push((i, j, weight * pi * pj));
                    }
                }
            }
        }
        let n = self.velocity.num_dofs();
        Ok(NudgingTerm { chi, operator: SparseOperator::from_triplets(n, n, &triplets), observation: self })
    }

    /// Empirical `sup ||phi - I_H phi|| / ||grad phi||` over
    /// `phi = sin(k pi x) sin(m pi y)`, `1 <= k, m <= 4`.
    pub fn estimate_c1h(&self) -> f64 {
        let rule = QuadratureRule::degree6();
        let pi = std::f64::consts::PI;
        let mut worst: f64 = 0.0;
        for k in 1..=4 {
            for m in 1..=4 {
                let (kf, mf) = (k as f64 * pi, m as f64 * pi);
                let phi = |p: Point| (kf * p[0]).sin() * (mf * p[1]).sin();
                // component-wise probe (phi, 0)
                let means = self.means_of(|p| [phi(p), 0.0]);
                let mut defect = 0.0;
                for (t, &cell) in self.cell_map.coarse_of_fine.iter().enumerate() {
                    let geom = self.velocity.geometry(t);
                    for (lambda, w) in rule.points.iter().zip(&rule.weights) {
                        let d = phi(geom.map(*lambda)) - means[2 * cell];
                        defect += geom.jacobian_weight(*w) * d * d;
                    }
                }
                let grad = 0.5 * (kf * kf + mf * mf).sqrt();
                if grad > 0.0 {
                    worst = worst.max(defect.sqrt() / grad);
                }
            }
        }
        worst
    }
}

/// `chi (I_H (v - u), w)` split into the operator on `v` and the load from data.
#[derive(Debug)]
pub struct NudgingTerm<'a> {
    pub chi: f64,
    pub operator: SparseOperator,
    observation: &'a ObservationOperator,
}

impl NudgingTerm<'_> {
    /// `chi P^T M_H u_bar` for observed cell means `u_bar`.
    pub fn load(&self, coarse_means: &[f64]) -> Vec<f64> {
        let weighted: Vec<f64> = coarse_means
            .iter()
            .enumerate()
            .map(|(i, u)| self.chi * self.observation.cell_areas[i / 2] * u)
            .collect();
        self.observation.projection.matvec_transpose(&weighted)
    }
}

/// Source of observed coarse velocity means over time.
pub trait ObservationSource: Send + Sync {
    /// Cell means at time `t`, flattened `[2 K + c]`.
    fn coarse_means(&self, t: f64) -> Result<Vec<f64>>;
}

/// Observations of a known velocity field.
pub struct AnalyticObservations<F> {
    operator: Arc<ObservationOperator>,
    velocity: F,
    interval: Option<f64>,
}

impl<F: Fn(Point, f64) -> [f64; 2] + Send + Sync> AnalyticObservations<F> {
    /// Means of the field at exactly the requested time.
    pub fn new(operator: Arc<ObservationOperator>, velocity: F) -> Self {
        AnalyticObservations { operator, velocity, interval: None }
    }

    /// Means sampled at `t = k * interval` and linearly interpolated in
    /// between, as for data recorded at the time levels of a reference run.
    pub fn sampled(operator: Arc<ObservationOperator>, velocity: F, interval: f64) -> Result<Self> {
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::Observation(format!("sample interval must be positive, got {interval}")));
        }
        Ok(AnalyticObservations { operator, velocity, interval: Some(interval) })
    }

    fn means_at(&self, t: f64) -> Vec<f64> {
        self.operator.means_of(|p| (self.velocity)(p, t))
    }
}

impl<F: Fn(Point, f64) -> [f64; 2] + Send + Sync> ObservationSource for AnalyticObservations<F> {
    fn coarse_means(&self, t: f64) -> Result<Vec<f64>> {
        let Some(dt) = self.interval else {
            return Ok(self.means_at(t));
        };
        let k = (t / dt).floor();
        let theta = t / dt - k;
        if theta.abs() < 1e-12 || (1.0 - theta).abs() < 1e-12 {
            return Ok(self.means_at((t / dt).round() * dt));
        }
        let (a, b) = (self.means_at(k * dt), self.means_at((k + 1.0) * dt));
        Ok(a.iter().zip(&b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect())
    }
}

/// Time series of coarse means (as recorded from a reference run), linearly
/// interpolated in time and held constant outside the recorded window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

pub const OBSERVATION_CSV_HEADER: &str = "t,cell_id,ubar_x,ubar_y";

impl ObservationSeries {
    pub fn push(&mut self, t: f64, means: Vec<f64>) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::Observation(format!("sample time {t} does not increase past {last}")));
            }
        }
        if let Some(first) = self.means.first() {
            if first.len() != means.len() {
                return Err(Error::DimensionMismatch { expected: first.len(), found: means.len() });
            }
        }
        self.times.push(t);
        self.means.push(means);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(OBSERVATION_CSV_HEADER);
        out.push('\n');
        for (t, m) in self.times.iter().zip(&self.means) {
            for (k, c) in m.chunks(2).enumerate() {
                let _ = writeln!(out, "{},{},{},{}", fmt_f64(*t), k, fmt_f64(c[0]), fmt_f64(c[1]));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ObservationSeries> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == OBSERVATION_CSV_HEADER => {}
            other => {
                return Err(Error::Observation(format!("bad header {other:?}, expected `{OBSERVATION_CSV_HEADER}`")))
            }
        }
        // keyed on the exact bit pattern of t to keep rows of one sample together
        let mut samples: BTreeMap<u64, (f64, BTreeMap<usize, [f64; 2]>)> = BTreeMap::new();
        let mut order = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Observation(format!("line {}: expected 4 fields", i + 2)));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Observation(format!("line {}: `{s}`: {e}", i + 2)))
            };
            let t = parse(fields[0])?;
            let cell: usize =
                fields[1].parse().map_err(|e| Error::Observation(format!("line {}: cell id: {e}", i + 2)))?;
            let value = [parse(fields[2])?, parse(fields[3])?];
            let entry = samples.entry(t.to_bits()).or_insert_with(|| {
                order.push(t.to_bits());
                (t, BTreeMap::new())
            });
            if entry.1.insert(cell, value).is_some() {
                return Err(Error::Observation(format!("duplicate cell {cell} at t = {t}")));
            }
        }
        let mut series = ObservationSeries::default();
        for key in order {
            let (t, cells) = &samples[&key];
            let n = cells.len();
            if cells.keys().copied().ne(0..n) {
                return Err(Error::Observation(format!("cell ids at t = {t} are not 0..{n}")));
            }
            series.push(*t, cells.values().flat_map(|v| *v).collect())?;
        }
        Ok(series)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<ObservationSeries> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ObservationSeries::from_csv(&text)
    }
}

impl ObservationSource for ObservationSeries {
    fn coarse_means(&self, t: f64) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Observation("empty observation series".into()));
        }
        let n = self.times.len();
        if t <= self.times[0] {
            return Ok(self.means[0].clone());
        }
        if t >= self.times[n - 1] {
            return Ok(self.means[n - 1].clone());
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let theta = (t - t0) / (t1 - t0);
        Ok(self.means[lo].iter().zip(&self.means[hi]).map(|(a, b)| (1.0 - theta) * a + theta * b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_mass;
    use crate::spaces::{build_dofmap, interpolate_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn velocity(n: usize) -> Arc<DofMap> {
        Arc::new(build_dofmap(Arc::new(build_unit_square_mesh(n).unwrap()), ElementKind::P2Vector))
    }

    fn random_field(dm: &Arc<DofMap>, rng: &mut ChaCha8Rng) -> Field {
        let c = (0..dm.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_coeffs(dm.clone(), c).unwrap()
    }

    #[test]
    fn same_mesh_projection_is_cellwise_mean_and_idempotent() {
        let dm = velocity(2);
        let op = build_observation(&dm, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_field(&dm, &mut rng);
        let means = op.apply(&v).unwrap();
        // projecting the piecewise-constant means again reproduces them
        let again = op.means_of(|p| {
            let t = (0..dm.mesh().num_triangles())
                .find(|&t| {
                    let [a, b, c] = dm.mesh().triangle_points(t);
                    crate::mesh::signed_area(a, b, p) >= -1e-14
                        && crate::mesh::signed_area(b, c, p) >= -1e-14
                        && crate::mesh::signed_area(c, a, p) >= -1e-14
                })
                .unwrap();
            let cell = op.cell_map.coarse_of_fine[t];
            [means[2 * cell], means[2 * cell + 1]]
        });
        for (a, b) in means.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_preserved() {
        let dm = velocity(8);
        let op = build_observation(&dm, 4).unwrap();
        let v = interpolate_vector(&dm, |_, _| [0.4, -2.5], 0.0);
        for cell in op.apply_cells(&v).unwrap() {
            assert!((cell[0] - 0.4).abs() < 1e-12 && (cell[1] + 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_x_on_single_coarse_square() {
        let dm = velocity(4);
        let op = build_observation(&dm, 1).unwrap();
        let v = interpolate_vector(&dm, |p, _| [p[0], 0.0], 0.0);
        let cells = op.apply_cells(&v).unwrap();
        // coarse triangles [(0,0),(1,0),(1,1)] and [(0,0),(1,1),(0,1)]: means of x are 2/3 and 1/3
        assert!((cells[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((cells[1][0] - 1.0 / 3.0).abs() < 1e-12);
        let total: f64 = cells.iter().zip(op.cell_areas()).map(|(c, a)| c[0] * a).sum();
        assert!((total - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polynomial_means_match_analytic_cell_means() {
        let dm = velocity(8);
        let op = build_observation(&dm, 2).unwrap();
        let q = |p: Point| [p[0] * p[1] - p[1] * p[1], 3.0 * p[0] * p[0]];
        let v = interpolate_vector(&dm, |p, _| q(p), 0.0);
        let a = op.apply(&v).unwrap();
        let b = op.means_of(q);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_finer_than_fine_rejected() {
        let dm = velocity(2);
        assert!(build_observation(&dm, 4).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let op = build_observation(&velocity(4), 2).unwrap();
        assert!(op.apply_coeffs(&[0.0; 5]).is_err());
    }

    #[test]
    fn self_adjoint_and_contractive() {
        let dm = velocity(8);
        let op = build_observation(&dm, 2).unwrap();
        let m = assemble_mass(&dm);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_field(&dm, &mut rng);
            let w = random_field(&dm, &mut rng);
            let (ia, iw) = (op.apply(&a).unwrap(), op.apply(&w).unwrap());
            // (I_H a, w) = sum_K |K| abar_K . wbar_K = (a, I_H w)
            let lhs = op.coarse_inner(&ia, &iw);
            let via_fine: f64 = {
                let load = op.projection().matvec_transpose(
                    &ia.iter().enumerate().map(|(i, x)| x * op.cell_areas()[i / 2]).collect::<Vec<_>>(),
                );
                load.iter().zip(&w.coeffs).map(|(x, y)| x * y).sum()
            };
            assert!((lhs - via_fine).abs() < 1e-12);
            // contraction: ||I_H a|| <= ||a||
            let na = m.bilinear(&a.coeffs, &a.coeffs).sqrt();
            assert!(op.coarse_norm(&ia) <= na + 1e-12);
        }
    }

    #[test]
    fn nudging_operator_properties() {
        let dm = velocity(4);
        let op = build_observation(&dm, 2).unwrap();
        let zero = op.assemble_nudging(0.0).unwrap();
        assert_eq!(zero.operator.max_abs(), 0.0);
        assert!(zero.load(&vec![1.0; 2 * op.num_cells()]).iter().all(|&x| x == 0.0));
        assert!(op.assemble_nudging(-1.0).is_err());

        let chi = 37.0;
        let g = op.assemble_nudging(chi).unwrap();
        assert!(g.operator.max_transpose_defect(1.0) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v = random_field(&dm, &mut rng);
            let q = g.operator.bilinear(&v.coeffs, &v.coeffs);
            let iv = op.apply(&v).unwrap();
            let expected = chi * op.coarse_inner(&iv, &iv);
            assert!(q >= -1e-12);
            assert!((q - expected).abs() < 1e-12 * expected.max(1.0));
        }
        // data with the same coarse means leaves no residual
        let v = random_field(&dm, &mut rng);
        let data = op.apply(&v).unwrap();
        let residual: f64 = g
            .operator
            .matvec(&v.coeffs)
            .iter()
            .zip(g.load(&data))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(residual < 1e-12);
    }

    #[test]
    fn c1h_estimate_bounds_and_scaling() {
        let dm = velocity(16);
        let coarse = build_observation(&dm, 4).unwrap();
        let finer = build_observation(&dm, 8).unwrap();
        let (a, b) = (coarse.estimate_c1h(), finer.estimate_c1h());
        assert!(a > 0.0);
        assert!(a <= coarse.coarse_width() / std::f64::consts::PI, "{a}");
        assert!(b <= finer.coarse_width() / std::f64::consts::PI, "{b}");
        let ratio = b / a;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn series_round_trip_and_interpolation() {
        let mut s = ObservationSeries::default();
        s.push(0.0, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        s.push(0.5, vec![1.0, 1.0, 0.1, 1.0 / 3.0]).unwrap();
        assert!(s.push(0.5, vec![0.0; 4]).is_err());
        let back = ObservationSeries::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back, s);
        let mid = s.coarse_means(0.25).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-15);
        assert_eq!(s.coarse_means(10.0).unwrap(), s.means[1]);
        assert!(ObservationSeries::from_csv("t,x\n").is_err());
        assert!(ObservationSeries::from_csv("t,cell_id,ubar_x,ubar_y\n0,1,0,0\n").is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn series_csv_round_trip_and_convex_interpolation(
            steps in proptest::collection::vec(1e-3f64..1.0, 1..6),
            values in proptest::collection::vec(-1e3f64..1e3, 24),
            frac in 0.0f64..1.0,
        ) {
            let mut s = ObservationSeries::default();
            let mut t = 0.0;
            for (k, dt) in std::iter::once(0.0).chain(steps.iter().copied()).enumerate() {
                t += dt;
                s.push(t, values[(4 * k) % 24..(4 * k) % 24 + 4].to_vec()).unwrap();
            }
            proptest::prop_assert_eq!(&ObservationSeries::from_csv(&s.to_csv()).unwrap(), &s);
            let q = frac * t;
            let m = s.coarse_means(q).unwrap();
            let hi = s.times.partition_point(|&x| x < q).min(s.len() - 1);
            let lo = hi.saturating_sub(1);
            for (i, v) in m.iter().enumerate() {
                let (a, b) = (s.means[lo][i], s.means[hi][i]);
                proptest::prop_assert!(*v >= a.min(b) - 1e-9 && *v <= a.max(b) + 1e-9);
            }
            for (k, &tk) in s.times.iter().enumerate() {
                proptest::prop_assert_eq!(&s.coarse_means(tk).unwrap(), &s.means[k]);
            }
        }
    }
}
