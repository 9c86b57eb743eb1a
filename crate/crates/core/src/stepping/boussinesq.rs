use std::sync::Arc;

use serde::Serialize;

use super::{
    at_step, check_finite, linear_combination, Discretization, FlowState, SaddleSystem, SteadyStepper,
    DIVERGENCE_TOLERANCE,
};
use crate::assembly::{assemble_buoyancy, assemble_scalar_source, BlockAssembler};
use crate::linsolve::{LinearSystem, SparseSolver, RESIDUAL_TOLERANCE};
use crate::models::ModelSpec;
use crate::observation::ObservationSource;
use crate::spaces::Field;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoussinesqRecord {
    pub step: usize,
    pub t: f64,
    /// `||w_{n+1} - w_n|| / dt`
    pub velocity_change: f64,
    /// `||T_{n+1} - T_n|| / dt`
    pub temperature_change: f64,
    pub kinetic: f64,
    pub div_residual: f64,
    pub solver_residual: f64,
}

/// Sequential BDF2 stepper: temperature first with the extrapolated velocity
/// `w* = 2 w_n - w_{n-1}`, then momentum with the same convecting field and
/// the new temperature in the buoyancy force. The first step is backward Euler.
pub struct BoussinesqStepper {
    disc: Arc<Discretization>,
    model: ModelSpec,
    dt: f64,
    flow: SaddleSystem,
    heat: BlockAssembler,
    heat_solver: SparseSolver,
    heat_constraints: Vec<(usize, f64)>,
    velocity_constraints: Vec<(usize, f64)>,
    data: Option<Arc<dyn ObservationSource>>,
    records: Vec<BoussinesqRecord>,
}

impl std::fmt::Debug for BoussinesqStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoussinesqStepper").field("model", &self.model).finish_non_exhaustive()
    }
}

impl BoussinesqStepper {
    pub fn new(
        disc: Arc<Discretization>,
        model: &ModelSpec,
        data: Option<Arc<dyn ObservationSource>>,
    ) -> Result<BoussinesqStepper> {
        model.validate()?;
        if !model.kind.is_boussinesq() {
            return Err(Error::Config("the BDF2 stepper integrates the Boussinesq kinds".into()));
        }
        let chi = model.nudging();
        if chi > 0.0 && data.is_none() {
            return Err(Error::Config("a nudged run needs an observation source".into()));
        }
        let flow = SaddleSystem::new(&disc, chi > 0.0)?;
        let n = disc.temperature.num_dofs();
        let heat = BlockAssembler::new(n, n, &[(0, 0, &disc.temperature_mass)]);
        Ok(BoussinesqStepper {
            heat_constraints: disc.temperature_constraints(),
            velocity_constraints: disc.velocity_constraints(|_| [0.0, 0.0]),
            dt: model.dt,
            model: model.clone(),
            flow,
            heat,
            heat_solver: SparseSolver::new(RESIDUAL_TOLERANCE),
            data,
            records: Vec::new(),
            disc,
        })
    }

    /// Relative residual accepted from the linear solvers.
    pub fn with_solver_tolerance(mut self, tolerance: f64) -> Self {
        self.flow.solver = SparseSolver::new(tolerance);
        self.heat_solver = SparseSolver::new(tolerance);
        self
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn records(&self) -> &[BoussinesqRecord] {
        &self.records
    }

    /// Rest with the conduction profile `T = 1 - x`.
    pub fn conduction_state(&self) -> FlowState {
        let velocity = Field::zeros(self.disc.velocity.clone());
        let temperature = crate::spaces::interpolate_scalar(&self.disc.temperature, |p, _| 1.0 - p[0], 0.0);
        FlowState::new(&self.disc, velocity, 0.0).with_temperature(temperature)
    }

    pub fn step(&mut self, state: &FlowState) -> Result<FlowState> {
        let (step, t0) = (state.step, state.time);
        let result = self.step_inner(state);
        at_step(result, step + 1, t0 + self.dt)
    }

    fn step_inner(&mut self, state: &FlowState) -> Result<FlowState> {
        let disc = self.disc.clone();
        let dt = self.dt;
        let t1 = state.time + dt;
        let step = state.step + 1;
        let temperature = state
            .temperature
            .as_ref()
            .ok_or_else(|| Error::Config("Boussinesq state has no temperature".into()))?;
        let w = &state.velocity.coeffs;
        let tn = &temperature.coeffs;
        let bdf2 = state.previous_velocity.is_some() && state.previous_temperature.is_some();
        let (a0, wind, w_hist, t_hist) = if bdf2 {
            let wp = &state.previous_velocity.as_ref().expect("checked").coeffs;
            let tp = &state.previous_temperature.as_ref().expect("checked").coeffs;
            (
                1.5 / dt,
                linear_combination(2.0, w, -1.0, wp),
                linear_combination(2.0 / dt, w, -0.5 / dt, wp),
                linear_combination(2.0 / dt, tn, -0.5 / dt, tp),
            )
        } else {
            (1.0 / dt, w.clone(), w.iter().map(|x| x / dt).collect(), tn.iter().map(|x| x / dt).collect())
        };
        let wind = Field::from_coeffs(disc.velocity.clone(), wind)?;

        // temperature
        let heat_convection = disc.temperature_convection.assemble(&wind);
        let matrix = self.heat.fill(&[
            (0, a0, &disc.temperature_mass),
            (0, 1.0, &disc.temperature_stiffness),
            (0, 1.0, &heat_convection),
        ]);
        let mut rhs = disc.temperature_mass.matvec(&t_hist);
        if self.model.gamma != 0.0 {
            let gamma = self.model.gamma;
            for (r, s) in rhs.iter_mut().zip(assemble_scalar_source(|_, _| gamma, t1, &disc.temperature)) {
                *r += s;
            }
        }
        let system = LinearSystem::new(matrix, rhs)?.apply_dirichlet(&self.heat_constraints)?;
        let heat = self.heat_solver.solve_system(&system)?;
        check_finite(&heat.x, step, t1, "temperature")?;
        let new_temperature = Field::from_coeffs(disc.temperature.clone(), heat.x)?.with_time(t1);

        // momentum
        let chi = self.model.nudging();
        let convection = disc.convection.assemble(&wind);
        let mut rhs = disc.mass.matvec(&w_hist);
        let buoyancy =
            assemble_buoyancy(&new_temperature, self.model.pr, self.model.ra, self.model.gravity, &disc.velocity);
        for (r, b) in rhs.iter_mut().zip(&buoyancy) {
            *r += b;
        }
        if chi > 0.0 {
            let obs = disc.observation()?;
            let means = self.data.as_ref().expect("checked at construction").coarse_means(t1)?;
            if means.len() != 2 * obs.num_cells() {
                return Err(Error::DimensionMismatch { expected: 2 * obs.num_cells(), found: means.len() });
            }
            let weighted: Vec<f64> = means.iter().enumerate().map(|(i, u)| chi * obs.cell_areas()[i / 2] * u).collect();
            for (r, l) in rhs.iter_mut().zip(obs.projection().matvec_transpose(&weighted)) {
                *r += l;
            }
        }
        let terms = [
            (a0, &disc.mass),
            (self.model.pr, &disc.stiffness),
            (1.0, &convection),
            (self.model.rotation(), &disc.coriolis),
        ];
        let solution = self.flow.solve(&disc, &terms, chi, &rhs, &self.velocity_constraints)?;
        check_finite(&solution.velocity, step, t1, "velocity")?;
        let div_residual = disc.divergence_residual(&solution.velocity);
        if div_residual > DIVERGENCE_TOLERANCE {
            log::warn!("step {step}: divergence residual {div_residual:.3e}");
        }
        let velocity = Field::from_coeffs(disc.velocity.clone(), solution.velocity)?.with_time(t1);

        let mut dw = velocity.clone();
        dw.axpy(-1.0, &state.velocity);
        let mut dtemp = new_temperature.clone();
        dtemp.axpy(-1.0, temperature);
        self.records.push(BoussinesqRecord {
            step,
            t: t1,
            velocity_change: disc.mass.bilinear(&dw.coeffs, &dw.coeffs).max(0.0).sqrt() / dt,
            temperature_change: disc.temperature_mass.bilinear(&dtemp.coeffs, &dtemp.coeffs).max(0.0).sqrt() / dt,
            kinetic: disc.mass.bilinear(&velocity.coeffs, &velocity.coeffs),
            div_residual,
            solver_residual: heat.relative_residual.max(solution.relative_residual),
        });
        Ok(FlowState {
            velocity,
            pressure: Field::from_coeffs(disc.pressure.clone(), solution.pressure)?.with_time(t1),
            temperature: Some(new_temperature),
            previous_velocity: Some(state.velocity.clone()),
            previous_temperature: Some(temperature.clone()),
            time: t1,
            step,
        })
    }
}

impl SteadyStepper for BoussinesqStepper {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn advance(&mut self, state: &FlowState) -> Result<FlowState> {
        self.step(state)
    }
}

impl SteadyStepper for super::CnleStepper {
    fn dt(&self) -> f64 {
        super::CnleStepper::dt(self)
    }

    fn advance(&mut self, state: &FlowState) -> Result<FlowState> {
        self.step(state)
    }
}

/// One BDF2 (or, without history, backward Euler) step with a freshly built stepper.
pub fn bdf2_boussinesq_step(
    disc: &Arc<Discretization>,
    state: &FlowState,
    model: &ModelSpec,
    data: Option<Arc<dyn ObservationSource>>,
) -> Result<FlowState> {
    BoussinesqStepper::new(disc.clone(), model, data)?.step(state)
}
