use std::sync::Arc;

use super::{at_step, check_finite, linear_combination, Discretization, EnergyRecord, FlowState, SaddleSystem};
use crate::assembly::assemble_forcing;
use crate::linsolve::{LinearSystem, SparseSolver, RESIDUAL_TOLERANCE};
use crate::mesh::Point;
use crate::models::{BoundarySpec, ModelSpec};
use crate::observation::ObservationSource;
use crate::spaces::Field;
use crate::{Error, Result};

type VectorFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

/// Linearly implicit Crank-Nicolson stepper. Each step solves for the
/// midpoint velocity `m = (v_n + v_{n+1}) / 2` with the convecting field
/// extrapolated as `(3 v_n - v_{n-1}) / 2` (`v_0` on the first step).
pub struct CnleStepper {
    disc: Arc<Discretization>,
    model: ModelSpec,
    dt: f64,
    system: SaddleSystem,
    data: Option<Arc<dyn ObservationSource>>,
    forcing: VectorFn,
    boundary: VectorFn,
    homogeneous: bool,
    reference: Option<VectorFn>,
    dual_solver: SparseSolver,
    records: Vec<EnergyRecord>,
}

impl std::fmt::Debug for CnleStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CnleStepper").field("model", &self.model).field("dt", &self.dt).finish_non_exhaustive()
    }
}

impl CnleStepper {
    pub fn new(
        disc: Arc<Discretization>,
        model: &ModelSpec,
        data: Option<Arc<dyn ObservationSource>>,
    ) -> Result<CnleStepper> {
        model.validate()?;
        if model.kind.is_boussinesq() {
            return Err(Error::Config("the Crank-Nicolson stepper integrates the NSE kinds".into()));
        }
        let chi = model.nudging();
        if chi > 0.0 && data.is_none() {
            return Err(Error::Config("a nudged run needs an observation source".into()));
        }
        let system = SaddleSystem::new(&disc, chi > 0.0)?;
        let forcing = model.forcing_fn();
        let spec = model.boundary;
        let boundary: VectorFn = Arc::new(move |p, t| crate::models::boundary_velocity(spec, crate::mesh::Side::Left, t)(p));
        Ok(CnleStepper {
            disc,
            model: model.clone(),
            dt: model.dt,
            system,
            data,
            forcing: Arc::new(forcing),
            boundary,
            homogeneous: spec == BoundarySpec::Cavity,
            reference: None,
            dual_solver: SparseSolver::new(RESIDUAL_TOLERANCE),
            records: Vec::new(),
        })
    }

    /// Exact velocity used for the `err_L2` column.
    pub fn with_reference(mut self, reference: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.reference = Some(Arc::new(reference));
        self
    }

    /// Replaces the body force (default: the model's).
    pub fn with_forcing(mut self, forcing: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.forcing = Arc::new(forcing);
        self
    }

    /// Relative residual accepted from the linear solver.
    pub fn with_solver_tolerance(mut self, tolerance: f64) -> Self {
        self.system.solver = SparseSolver::new(tolerance);
        self
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<EnergyRecord> {
        std::mem::take(&mut self.records)
    }

    /// State at `t` with the given velocity, its boundary values replaced by the Dirichlet data.
    pub fn initial_state(&self, mut velocity: Field, t: f64) -> FlowState {
        let g = &self.boundary;
        self.disc.impose_velocity(&mut velocity, |p| g(p, t));
        FlowState::new(&self.disc, velocity, t)
    }

    pub fn step(&mut self, state: &FlowState) -> Result<FlowState> {
        let (step, t0) = (state.step, state.time);
        let result = self.step_inner(state);
        at_step(result, step + 1, t0 + self.dt)
    }

    fn step_inner(&mut self, state: &FlowState) -> Result<FlowState> {
        let disc = self.disc.clone();
        let dt = self.dt;
        let (t0, t1) = (state.time, state.time + dt);
        let tm = t0 + 0.5 * dt;
        let step = state.step + 1;
        let nu = self.model.viscosity();
        let omega = self.model.rotation();
        let chi = self.model.nudging();
        let v = &state.velocity.coeffs;

        let wind = match &state.previous_velocity {
            Some(prev) => linear_combination(1.5, v, -0.5, &prev.coeffs),
            None => v.clone(),
        };
        let wind = Field::from_coeffs(disc.velocity.clone(), wind)?;
        let convection = disc.convection.assemble(&wind);

        let forcing = assemble_forcing(&*self.forcing, tm, &disc.velocity);
        let mv = disc.mass.matvec(v);
        let mut rhs: Vec<f64> = mv.iter().zip(&forcing).map(|(a, f)| 2.0 / dt * a + f).collect();
        let data = if chi > 0.0 {
            let source = self.data.as_ref().expect("checked at construction");
            let means = source.coarse_means(tm)?;
            let obs = disc.observation()?;
            if means.len() != 2 * obs.num_cells() {
                return Err(Error::DimensionMismatch { expected: 2 * obs.num_cells(), found: means.len() });
            }
            let weighted: Vec<f64> = means.iter().enumerate().map(|(i, u)| chi * obs.cell_areas()[i / 2] * u).collect();
            for (r, l) in rhs.iter_mut().zip(obs.projection().matvec_transpose(&weighted)) {
                *r += l;
            }
            Some(means)
        } else {
            None
        };

        let g = &self.boundary;
        let constraints = disc.velocity_constraints(|p| {
            let (a, b) = (g(p, t0), g(p, t1));
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        });
        let terms = [(2.0 / dt, &disc.mass), (nu, &disc.stiffness), (1.0, &convection), (omega, &disc.coriolis)];
        let solution = self.system.solve(&disc, &terms, chi, &rhs, &constraints)?;
        let m = solution.velocity;
        check_finite(&m, step, t1, "velocity")?;
        check_finite(&solution.pressure, step, t1, "pressure")?;
        let v1 = linear_combination(2.0, &m, -1.0, v);

        // energy bookkeeping, each term computed independently
        let kinetic0 = disc.mass.bilinear(v, v);
        let kinetic = disc.mass.bilinear(&v1, &v1);
        let dissipation = nu * disc.stiffness.bilinear(&m, &m);
        let work_force: f64 = forcing.iter().zip(&m).map(|(f, x)| f * x).sum();
        let (nudge_energy, misfit, nudge_cross, data_energy) = match &data {
            Some(means) => {
                let obs = disc.observation()?;
                let pm = obs.apply_coeffs(&m)?;
                let diff: Vec<f64> = means.iter().zip(&pm).map(|(u, p)| u - p).collect();
                (
                    chi * obs.coarse_inner(&pm, &pm),
                    chi * obs.coarse_inner(&diff, &diff),
                    -chi * obs.coarse_inner(&diff, &pm),
                    chi * obs.coarse_inner(means, means),
                )
            }
            None => (0.0, 0.0, 0.0, 0.0),
        };
        // reaction of the eliminated boundary rows: the power supplied through the boundary
        let boundary_work = if self.homogeneous {
            0.0
        } else {
            let mut residual = disc.mass.matvec(&linear_combination(2.0 / dt, &m, -2.0 / dt, v));
            for (op, a) in [(&disc.stiffness, nu), (&convection, 1.0), (&disc.coriolis, omega)] {
                if a != 0.0 {
                    for (r, x) in residual.iter_mut().zip(op.matvec(&m)) {
                        *r += a * x;
                    }
                }
            }
            for (r, x) in residual.iter_mut().zip(disc.divergence.matvec_transpose(&solution.pressure)) {
                *r -= x;
            }
            if let Some(means) = &data {
                let obs = disc.observation()?;
                let pm = obs.apply_coeffs(&m)?;
                let weighted: Vec<f64> =
                    pm.iter().zip(means).enumerate().map(|(i, (p, u))| chi * obs.cell_areas()[i / 2] * (p - u)).collect();
                for (r, x) in residual.iter_mut().zip(obs.projection().matvec_transpose(&weighted)) {
                    *r += x;
                }
            }
            disc.velocity_boundary_dofs().iter().map(|&d| m[d] * (residual[d] - forcing[d])).sum::<f64>()
        };
        let work = work_force + boundary_work;
        let energy_residual = 0.5 * (kinetic - kinetic0) + dt * (dissipation + nudge_cross - work);
        let stability_margin = if self.homogeneous {
            let dual = self.dual_norm_squared(&forcing)?;
            let lhs = kinetic - kinetic0 + dt * (dissipation + nudge_energy + misfit);
            let rhs = dt / nu * dual + dt * data_energy;
            Some(rhs - lhs)
        } else {
            None
        };
        let div_residual = disc.divergence_residual(&m);
        if div_residual > super::DIVERGENCE_TOLERANCE {
            log::warn!("step {step}: divergence residual {div_residual:.3e}");
        }

        let velocity = Field::from_coeffs(disc.velocity.clone(), v1)?.with_time(t1);
        let err_l2 = self.reference.as_ref().map(|r| velocity.l2_error(|p| r(p, t1)));
        self.records.push(EnergyRecord {
            step,
            t: t1,
            kinetic,
            dissipation,
            nudge_energy,
            misfit,
            work,
            boundary_work,
            energy_residual,
            div_residual,
            err_l2,
            stability_margin,
            solver_residual: solution.relative_residual,
            grad_norm: disc.stiffness.bilinear(&velocity.coeffs, &velocity.coeffs).max(0.0).sqrt(),
        });
        Ok(FlowState {
            velocity,
            pressure: Field::from_coeffs(disc.pressure.clone(), solution.pressure)?.with_time(tm),
            temperature: None,
            previous_velocity: Some(state.velocity.clone()),
            previous_temperature: None,
            time: t1,
            step,
        })
    }

    /// `sup_w (f, w)^2 / ||grad w||^2` over discrete velocities vanishing on the boundary.
    fn dual_norm_squared(&mut self, load: &[f64]) -> Result<f64> {
        if load.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let constraints: Vec<(usize, f64)> = self.disc.velocity_boundary_dofs().iter().map(|&d| (d, 0.0)).collect();
        let system = LinearSystem::new(self.disc.stiffness.clone(), load.to_vec())?.apply_dirichlet(&constraints)?;
        let y = self.dual_solver.solve_system(&system)?.x;
        Ok(system.rhs.iter().zip(&y).map(|(a, b)| a * b).sum())
    }
}

/// One CNLE step with a freshly built stepper (convenient for single steps;
/// loops should keep a [`CnleStepper`] to reuse the factorization pattern).
pub fn cnle_step(
    disc: &Arc<Discretization>,
    state: &FlowState,
    model: &ModelSpec,
    data: Option<Arc<dyn ObservationSource>>,
) -> Result<(FlowState, EnergyRecord)> {
    let mut stepper = CnleStepper::new(disc.clone(), model, data)?;
    let next = stepper.step(state)?;
    let record = stepper.records.pop().expect("one record per step");
    Ok((next, record))
}
