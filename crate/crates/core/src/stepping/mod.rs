//! Time integrators: the linearly implicit Crank-Nicolson scheme for the
//! (nudged) Navier-Stokes equations and BDF2 with linear extrapolation for the
//! Boussinesq system, with energy and assumption diagnostics.

mod boussinesq;
mod cnle;
mod diagnostics;

use std::sync::Arc;

use crate::assembly::{
    assemble_coriolis, assemble_divergence, assemble_mass, assemble_stiffness, BlockAssembler, ConvectionAssembler,
    SparseOperator,
};
use crate::linsolve::{remove_mean, LinearSystem, SparseSolver, RESIDUAL_TOLERANCE};
use crate::mesh::{build_unit_square_mesh, Mesh, Point, Side};
use crate::models::boundary_temperature;
use crate::observation::{build_observation, ObservationOperator};
use crate::spaces::{build_dofmap, DofMap, ElementKind, Field};
use crate::{Error, Result};

pub use boussinesq::{bdf2_boussinesq_step, BoussinesqRecord, BoussinesqStepper};
pub use cnle::{cnle_step, CnleStepper};
pub use diagnostics::{
    check_assumptions, run_to_steady, time_series_csv, write_time_series, AssumptionInputs, AssumptionReport, EnergyRecord,
    SteadyOutcome, SteadyStepper, TIME_SERIES_HEADER,
};

/// Tolerance on `||B v||_inf` after each solve.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-9;

/// Spaces and time-independent operators on one mesh.
#[derive(Debug)]
pub struct Discretization {
    pub n: usize,
    pub mesh: Arc<Mesh>,
    pub velocity: Arc<DofMap>,
    pub pressure: Arc<DofMap>,
    pub temperature: Arc<DofMap>,
    pub mass: SparseOperator,
    /// Unit-coefficient vector Laplacian.
    pub stiffness: SparseOperator,
    pub divergence: SparseOperator,
    pub coriolis: SparseOperator,
    pub pressure_mass: SparseOperator,
    pub temperature_mass: SparseOperator,
    pub temperature_stiffness: SparseOperator,
    pub convection: ConvectionAssembler,
    pub temperature_convection: ConvectionAssembler,
    pub observation: Option<Arc<ObservationOperator>>,
    velocity_boundary: Vec<usize>,
    flux_weights: Vec<f64>,
}

/// Taylor-Hood discretization of the unit square with `n x n` cells, and the
/// coarse observation operator when `coarse_n` is given.
pub fn build_discretization(n: usize, coarse_n: Option<usize>) -> Result<Arc<Discretization>> {
    let mesh = Arc::new(build_unit_square_mesh(n)?);
    let velocity = Arc::new(build_dofmap(mesh.clone(), ElementKind::P2Vector));
    let pressure = Arc::new(build_dofmap(mesh.clone(), ElementKind::P1));
    let temperature = Arc::new(build_dofmap(mesh.clone(), ElementKind::P2));
    let divergence = assemble_divergence(&velocity, &pressure);
    let velocity_boundary = velocity.boundary_dofs_on(&Side::ALL);
    // column sums of B: the discrete outward flux of each velocity dof
    let column_sums = divergence.matvec_transpose(&vec![1.0; pressure.num_dofs()]);
    let flux_weights = velocity_boundary.iter().map(|&d| column_sums[d]).collect();
    let observation = coarse_n.map(|c| build_observation(&velocity, c).map(Arc::new)).transpose()?;
    Ok(Arc::new(Discretization {
        n,
        mass: assemble_mass(&velocity),
        stiffness: assemble_stiffness(&velocity, 1.0)?,
        coriolis: assemble_coriolis(&velocity),
        pressure_mass: assemble_mass(&pressure),
        temperature_mass: assemble_mass(&temperature),
        temperature_stiffness: assemble_stiffness(&temperature, 1.0)?,
        convection: ConvectionAssembler::new(&velocity),
        temperature_convection: ConvectionAssembler::new(&temperature),
        divergence,
        observation,
        velocity_boundary,
        flux_weights,
        mesh,
        velocity,
        pressure,
        temperature,
    }))
}

impl Discretization {
    pub fn velocity_boundary_dofs(&self) -> &[usize] {
        &self.velocity_boundary
    }

    /// Dirichlet constraints sampling `g` at the boundary velocity nodes, with
    /// the smallest correction that makes the discrete boundary flux vanish
    /// (otherwise the discrete continuity equations are inconsistent).
    pub fn velocity_constraints(&self, g: impl Fn(Point) -> [f64; 2]) -> Vec<(usize, f64)> {
        let mut values: Vec<f64> = self
            .velocity_boundary
            .iter()
            .map(|&d| g(self.velocity.dof_coord(d))[d % 2])
            .collect();
        let flux: f64 = values.iter().zip(&self.flux_weights).map(|(v, s)| v * s).sum();
        let norm: f64 = self.flux_weights.iter().map(|s| s * s).sum();
        if flux != 0.0 && norm > 0.0 {
            for (v, s) in values.iter_mut().zip(&self.flux_weights) {
                *v -= flux / norm * s;
            }
        }
        self.velocity_boundary.iter().copied().zip(values).collect()
    }

    /// Writes Dirichlet data into a velocity field.
    pub fn impose_velocity(&self, field: &mut Field, g: impl Fn(Point) -> [f64; 2]) {
        for (d, v) in self.velocity_constraints(g) {
            field.coeffs[d] = v;
        }
    }

    /// Discretely divergence-free velocity with boundary values `g` and
    /// minimal Dirichlet energy (the steady Stokes flow without body force).
    pub fn stokes_extension(&self, g: impl Fn(Point) -> [f64; 2]) -> Result<Field> {
        let mut system = SaddleSystem::new(self, false)?;
        let constraints = self.velocity_constraints(g);
        let rhs = vec![0.0; self.velocity.num_dofs()];
        let solution = system.solve(self, &[(1.0, &self.stiffness)], 0.0, &rhs, &constraints)?;
        Field::from_coeffs(self.velocity.clone(), solution.velocity)
    }

    /// Hot (`x = 0`) and cold (`x = 1`) wall temperatures.
    pub fn temperature_constraints(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for side in Side::ALL {
            if let Some(value) = boundary_temperature(side) {
                out.extend(self.temperature.boundary_dofs_on(&[side]).into_iter().map(|d| (d, value)));
            }
        }
        out.sort_by_key(|&(d, _)| d);
        out.dedup_by_key(|&mut (d, _)| d);
        out
    }

    /// `||B v||_inf`.
    pub fn divergence_residual(&self, v: &[f64]) -> f64 {
        self.divergence.matvec(v).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn observation(&self) -> Result<&Arc<ObservationOperator>> {
        self.observation
            .as_ref()
            .ok_or_else(|| Error::Config("nudging requires a coarse observation mesh".into()))
    }
}

/// Solution state between steps.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub velocity: Field,
    pub pressure: Field,
    pub temperature: Option<Field>,
    pub previous_velocity: Option<Field>,
    pub previous_temperature: Option<Field>,
    pub time: f64,
    pub step: usize,
}

impl FlowState {
    pub fn new(disc: &Discretization, velocity: Field, time: f64) -> FlowState {
        FlowState {
            velocity: velocity.with_time(time),
            pressure: Field::zeros(disc.pressure.clone()).with_time(time),
            temperature: None,
            previous_velocity: None,
            previous_temperature: None,
            time,
            step: 0,
        }
    }

    pub fn with_temperature(mut self, temperature: Field) -> FlowState {
        self.temperature = Some(temperature.with_time(self.time));
        self
    }

    pub fn kinetic_energy(&self, disc: &Discretization) -> f64 {
        disc.mass.bilinear(&self.velocity.coeffs, &self.velocity.coeffs)
    }
}

/// Velocity-pressure(-coarse) saddle system with a fixed block layout.
///
/// With nudging, the coarse means `z = P v` are carried as extra unknowns so the
/// dense coupling `P^T M_H P` never enters the matrix:
/// `[A, -B^T, chi P^T M_H; -B, 0, 0; chi M_H P, 0, -chi M_H]`.
struct SaddleSystem {
    nv: usize,
    np: usize,
    assembler: BlockAssembler,
    neg_bt: SparseOperator,
    neg_b: SparseOperator,
    pressure_diag: SparseOperator,
    coarse: Option<CoarseBlocks>,
    solver: SparseSolver,
}

struct CoarseBlocks {
    nc: usize,
    /// `P^T M_H`
    lift: SparseOperator,
    /// `M_H P`
    restrict: SparseOperator,
    /// `-M_H`
    neg_mass: SparseOperator,
}

struct SaddleSolution {
    velocity: Vec<f64>,
    pressure: Vec<f64>,
    relative_residual: f64,
}

impl SaddleSystem {
    fn new(disc: &Discretization, nudged: bool) -> Result<SaddleSystem> {
        let nv = disc.velocity.num_dofs();
        let np = disc.pressure.num_dofs();
        let neg_b = disc.divergence.scaled(-1.0);
        let neg_bt = neg_b.transpose();
        let pressure_diag = SparseOperator::identity(np);
        let coarse = if nudged {
            let obs = disc.observation()?;
            let nc = 2 * obs.num_cells();
            let areas: Vec<f64> = (0..nc).map(|i| obs.cell_areas()[i / 2]).collect();
            let restrict = {
                let t: Vec<_> = obs.projection().iter().map(|(r, c, v)| (r, c, areas[r] * v)).collect();
                SparseOperator::from_triplets(nc, nv, &t)
            };
            let lift = restrict.transpose();
            let neg_mass =
                SparseOperator::from_triplets(nc, nc, &areas.iter().enumerate().map(|(i, a)| (i, i, -a)).collect::<Vec<_>>());
            Some(CoarseBlocks { nc, lift, restrict, neg_mass })
        } else {
            None
        };
        let total = nv + np + coarse.as_ref().map_or(0, |c| c.nc);
        let mut blocks: Vec<(usize, usize, &SparseOperator)> =
            vec![(0, 0, &disc.mass), (0, nv, &neg_bt), (nv, 0, &neg_b), (nv, nv, &pressure_diag)];
        if let Some(c) = &coarse {
            blocks.push((0, nv + np, &c.lift));
            blocks.push((nv + np, 0, &c.restrict));
            blocks.push((nv + np, nv + np, &c.neg_mass));
        }
        let assembler = BlockAssembler::new(total, total, &blocks);
        Ok(SaddleSystem {
            nv,
            np,
            assembler,
            neg_bt,
            neg_b,
            pressure_diag,
            coarse,
            solver: SparseSolver::new(RESIDUAL_TOLERANCE),
        })
    }

    /// Solves with velocity operator `sum a_i V_i`, nudging strength `chi`,
    /// momentum load `rhs`, and velocity constraints; the pressure is pinned at
    /// dof 0 during the solve and returned with zero mean.
    fn solve(
        &mut self,
        disc: &Discretization,
        velocity_terms: &[(f64, &SparseOperator)],
        chi: f64,
        rhs: &[f64],
        constraints: &[(usize, f64)],
    ) -> Result<SaddleSolution> {
        let (nv, np) = (self.nv, self.np);
        let mut terms: Vec<(usize, f64, &SparseOperator)> =
            velocity_terms.iter().map(|&(a, op)| (0, a, op)).collect();
        terms.push((1, 1.0, &self.neg_bt));
        terms.push((2, 1.0, &self.neg_b));
        terms.push((3, 0.0, &self.pressure_diag));
        if let Some(c) = &self.coarse {
            terms.push((4, chi, &c.lift));
            terms.push((5, chi, &c.restrict));
            terms.push((6, chi, &c.neg_mass));
        }
        let matrix = self.assembler.fill(&terms);
        let mut full_rhs = vec![0.0; matrix.nrows()];
        full_rhs[..nv].copy_from_slice(rhs);
        let mut all: Vec<(usize, f64)> = constraints.to_vec();
        all.push((nv, 0.0));
        let system = LinearSystem::new(matrix, full_rhs)?.apply_dirichlet(&all)?;
        let solution = self.solver.solve_system(&system)?;
        let mut pressure = solution.x[nv..nv + np].to_vec();
        remove_mean(&mut pressure, &disc.pressure_mass);
        Ok(SaddleSolution {
            velocity: solution.x[..nv].to_vec(),
            pressure,
            relative_residual: solution.relative_residual,
        })
    }
}

fn check_finite(values: &[f64], step: usize, time: f64, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Simulation { step, time, reason: format!("non-finite {what}") })
    }
}

fn at_step<T>(result: Result<T>, step: usize, time: f64) -> Result<T> {
    result.map_err(|e| match e {
        Error::Simulation { .. } => e,
        other => Error::Simulation { step, time, reason: other.to_string() },
    })
}

fn linear_combination(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()
}

#[cfg(test)]
mod tests;
