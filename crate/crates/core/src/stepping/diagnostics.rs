use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::FlowState;
use crate::mesh::fmt_f64;
use crate::{Error, Result};

/// Per-step energy budget of the Crank-Nicolson scheme, with `m` the midpoint velocity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub step: usize,
    pub t: f64,
    /// `||v_{n+1}||^2`
    pub kinetic: f64,
    /// `nu ||grad m||^2`
    pub dissipation: f64,
    /// `chi ||I_H m||^2`
    pub nudge_energy: f64,
    /// `chi ||I_H (u - m)||^2`
    pub misfit: f64,
    /// `(f, m)` plus the boundary power
    pub work: f64,
    pub boundary_work: f64,
    /// `1/2 (||v_{n+1}||^2 - ||v_n||^2) + dt (nu ||grad m||^2 + chi (I_H (m - u), m) - work)`
    pub energy_residual: f64,
    /// `||B m||_inf`
    pub div_residual: f64,
    pub err_l2: Option<f64>,
    /// Right minus left side of the per-step stability inequality (homogeneous
    /// boundary data only); nonnegative when it holds.
    pub stability_margin: Option<f64>,
    pub solver_residual: f64,
    /// `||grad v_{n+1}||`
    pub grad_norm: f64,
}

impl EnergyRecord {
    /// Identity tolerance `1e-8 max(1, kinetic)`.
    pub fn energy_tolerance(&self) -> f64 {
        1e-8 * self.kinetic.max(1.0)
    }

    pub fn identity_holds(&self) -> bool {
        self.energy_residual.abs() <= self.energy_tolerance()
    }

    pub fn stability_holds(&self) -> Option<bool> {
        self.stability_margin.map(|m| m >= -self.energy_tolerance())
    }
}

pub const TIME_SERIES_HEADER: &str =
    "step,t,kinetic,dissipation,nudge_energy,misfit,work,energy_residual,div_residual,err_L2";

pub fn time_series_csv(records: &[EnergyRecord]) -> String {
    let mut out = String::from(TIME_SERIES_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.t),
            fmt_f64(r.kinetic),
            fmt_f64(r.dissipation),
            fmt_f64(r.nudge_energy),
            fmt_f64(r.misfit),
            fmt_f64(r.work),
            fmt_f64(r.energy_residual),
            fmt_f64(r.div_residual),
            r.err_l2.map(fmt_f64).unwrap_or_default()
        );
    }
    out
}

pub fn write_time_series(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    std::fs::write(path, time_series_csv(records)).map_err(|e| Error::io(path, e))
}

/// Inputs to the (H, chi) conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionInputs {
    pub chi: f64,
    pub nu: f64,
    pub omega: f64,
    /// Lipschitz constant of the omitted term.
    pub q0: f64,
    /// Estimate of `C_1 H`.
    pub c1h: f64,
    /// `sup_t ||grad v||` over the interval.
    pub grad_norm: f64,
    /// Constant of the discrete trilinear bound.
    pub c2: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `chi - omega q0 - (2048/19683) nu^-3 ||grad v||^4 - alpha chi / 2`
    pub continuous_chi_residual: f64,
    /// `nu - 2 (C_1 H)^2 chi`
    pub continuous_h_residual: f64,
    /// `chi - C_2^4 (9261/8) nu^-3 ||grad v||^4 - alpha chi`
    pub discrete_chi_residual: f64,
    /// `nu - (C_1 H)^2 chi`
    pub discrete_h_residual: f64,
    /// Largest admissible `alpha <= 1` in the continuous chi-condition (`None` if none is positive).
    pub alpha_max: Option<f64>,
    pub continuous_satisfied: bool,
    pub discrete_satisfied: bool,
}

pub fn check_assumptions(inputs: &AssumptionInputs) -> AssumptionReport {
    let AssumptionInputs { chi, nu, omega, q0, c1h, grad_norm, c2, alpha } = *inputs;
    let g4 = grad_norm.powi(4) / nu.powi(3);
    let continuous_core = chi - omega * q0 - 2048.0 / 19683.0 * g4;
    let discrete_core = chi - c2.powi(4) * 9261.0 / 8.0 * g4;
    let continuous_chi_residual = continuous_core - 0.5 * alpha * chi;
    let continuous_h_residual = nu - 2.0 * c1h * c1h * chi;
    let discrete_chi_residual = discrete_core - alpha * chi;
    let discrete_h_residual = nu - c1h * c1h * chi;
    let alpha_max = if chi > 0.0 && continuous_core > 0.0 { Some((2.0 * continuous_core / chi).min(1.0)) } else { None };
    let report = AssumptionReport {
        continuous_chi_residual,
        continuous_h_residual,
        discrete_chi_residual,
        discrete_h_residual,
        alpha_max,
        continuous_satisfied: continuous_chi_residual >= 0.0 && alpha * chi > 0.0 && continuous_h_residual > 0.0,
        discrete_satisfied: discrete_chi_residual >= 0.0 && alpha * chi > 0.0 && discrete_h_residual > 0.0,
    };
    if !report.continuous_satisfied {
        log::warn!("nudging assumptions violated (continuous form): {report:?}");
    }
    report
}

/// A stepper that can be driven to a steady state.
pub trait SteadyStepper {
    fn dt(&self) -> f64;
    fn advance(&mut self, state: &FlowState) -> Result<FlowState>;
}

#[derive(Clone, Debug)]
pub struct SteadyOutcome {
    pub state: FlowState,
    pub steps: usize,
    pub converged: bool,
    /// Final `||w_{n+1} - w_n|| / dt` (and for temperature, when present).
    pub velocity_rate: f64,
    pub temperature_rate: Option<f64>,
}

/// Steps until `||w_{n+1} - w_n||_{L2} / dt < tol` (and likewise for the
/// temperature), or `max_steps`. Aborts when the kinetic energy exceeds `energy_cap`.
pub fn run_to_steady(
    stepper: &mut impl SteadyStepper,
    initial: FlowState,
    tol: f64,
    max_steps: usize,
    energy_cap: f64,
    mut observe: impl FnMut(&FlowState),
) -> Result<SteadyOutcome> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("steady tolerance must be positive, got {tol}")));
    }
    let dt = stepper.dt();
    let mut state = initial;
    let mut velocity_rate = f64::INFINITY;
    let mut temperature_rate = None;
    for k in 0..max_steps {
        let next = stepper.advance(&state)?;
        observe(&next);
        let dv = difference_norm(&next.velocity, &state.velocity) / dt;
        let dtemp = match (&next.temperature, &state.temperature) {
            (Some(a), Some(b)) => Some(difference_norm(a, b) / dt),
            _ => None,
        };
        let energy = next.velocity.l2_norm().powi(2);
        if !(energy <= energy_cap) {
            return Err(Error::Simulation {
                step: next.step,
                time: next.time,
                reason: format!("kinetic energy {energy:.3e} exceeds cap {energy_cap:.3e}"),
            });
        }
        velocity_rate = dv;
        temperature_rate = dtemp;
        state = next;
        if dv < tol && dtemp.map_or(true, |d| d < tol) {
            return Ok(SteadyOutcome { state, steps: k + 1, converged: true, velocity_rate, temperature_rate });
        }
    }
    log::warn!("no steady state after {max_steps} steps (rate {velocity_rate:.3e})");
    Ok(SteadyOutcome { state, steps: max_steps, converged: false, velocity_rate, temperature_rate })
}

fn difference_norm(a: &crate::spaces::Field, b: &crate::spaces::Field) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d.l2_norm()
}
