use std::sync::Arc;

use super::{parallel_map, step_count, Check, RateTable, RunSummary};
use crate::config::SimConfig;
use crate::models::{ManufacturedSolution, ModelKind, ModelSpec};
use crate::observation::{AnalyticObservations, ObservationSource};
use crate::spaces::interpolate_vector;
use crate::stepping::{build_discretization, time_series_csv, CnleStepper, Discretization, EnergyRecord, FlowState};
use crate::Result;

/// Rates are checked from this step size down.
pub const RATE_CHECK_FROM_DT: f64 = 0.25;
pub const RATE_BAND: (f64, f64) = (1.7, 2.2);

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub table: RateTable,
    pub records: Vec<Vec<EnergyRecord>>,
    pub summary: RunSummary,
}

/// Manufactured model for `config`: nudged toward the exact solution (sampled
/// at the time levels) when `chi > 0`, otherwise the data-generating model itself.
pub(crate) fn manufactured_model(config: &SimConfig, dt: f64) -> ModelSpec {
    let base = ModelSpec {
        nu: config.nu,
        omega: config.omega,
        t_final: config.t_final,
        dt,
        ..ModelSpec::manufactured(ModelKind::NseDns)
    };
    if config.chi > 0.0 {
        base.nudged(config.chi)
    } else {
        base
    }
}

/// Steps `stepper` from `initial` for `steps` steps.
pub(crate) fn integrate(stepper: &mut CnleStepper, initial: FlowState, steps: usize) -> Result<FlowState> {
    let mut state = initial;
    for _ in 0..steps {
        state = stepper.step(&state)?;
    }
    Ok(state)
}

fn run_one(disc: &Arc<Discretization>, config: &SimConfig, dt: f64) -> Result<(f64, Vec<EnergyRecord>)> {
    let model = manufactured_model(config, dt);
    let exact = ManufacturedSolution;
    let data: Option<Arc<dyn ObservationSource>> = if model.nudging() > 0.0 {
        let obs = disc.observation()?.clone();
        Some(Arc::new(AnalyticObservations::sampled(obs, move |p, t| exact.velocity(p, t), dt)?))
    } else {
        None
    };
    let mut stepper = CnleStepper::new(disc.clone(), &model, data)?
        .with_solver_tolerance(config.solver_tol)
        .with_reference(move |p, t| exact.velocity(p, t));
    let u0 = interpolate_vector(&disc.velocity, |p, t| exact.velocity(p, t), 0.0);
    let initial = stepper.initial_state(u0, 0.0);
    let last = integrate(&mut stepper, initial, step_count(config.t_final, dt)?)?;
    let error = last.velocity.l2_error(|p| exact.velocity(p, config.t_final));
    log::info!("dt = {dt}: L2 error {error:.6e} at t = {}", last.time);
    Ok((error, stepper.take_records()))
}

/// Temporal convergence on the manufactured flow: L2 velocity error at
/// `t_final` for each step size in `dt_list`.
pub fn run_convergence(config: &SimConfig) -> Result<ConvergenceReport> {
    let coarse = (config.chi > 0.0).then_some(config.coarse_n);
    let disc = build_discretization(config.n, coarse)?;
    let mut dts = config.dt_list.clone();
    dts.sort_by(|a, b| b.total_cmp(a));
    let runs = parallel_map(config.worker_count(), &dts, |&dt| run_one(&disc, config, dt))?;
    let (errors, records): (Vec<f64>, Vec<Vec<EnergyRecord>>) = runs.into_iter().unzip();
    let table = RateTable::new(dts.clone(), errors)?;

    let mut summary = RunSummary::new(config);
    summary.write_file("convergence.csv", &table.to_csv("dt"))?;
    for (k, series) in records.iter().enumerate() {
        summary.write_file(&format!("series_dt{k}.csv"), &time_series_csv(series))?;
    }
    summary.scalar("dt", &table.parameter);
    summary.scalar("error", &table.error);
    summary.scalar("rate", &table.rate);
    summary.scalar("h", 1.0 / config.n as f64);

    summary.check(Check::new(
        "errors_decrease",
        table.is_strictly_decreasing(),
        format!("errors {:?}", table.error),
    ));
    let checked: Vec<f64> = (0..table.len())
        .filter(|&i| table.parameter[i] <= RATE_CHECK_FROM_DT * (1.0 + 1e-12))
        .filter_map(|i| table.rate[i])
        .collect();
    let in_band = !checked.is_empty() && checked.iter().all(|r| (RATE_BAND.0..=RATE_BAND.1).contains(r));
    summary.check(Check::new(
        "rates_in_band",
        in_band,
        format!("rates from dt = {RATE_CHECK_FROM_DT} on: {checked:?}, band {RATE_BAND:?}"),
    ));
    energy_checks(&mut summary, records.iter().flatten());
    Ok(ConvergenceReport { table, records, summary })
}

/// Energy identity on every step, and the stability inequality where it applies.
pub(crate) fn energy_checks<'a>(summary: &mut RunSummary, records: impl Iterator<Item = &'a EnergyRecord>) {
    let mut worst: f64 = 0.0;
    let mut identity = true;
    let mut stability = true;
    let mut min_margin = f64::INFINITY;
    let mut count = 0;
    for r in records {
        count += 1;
        worst = worst.max(r.energy_residual.abs() / r.energy_tolerance() * 1e-8);
        identity &= r.identity_holds();
        if let Some(m) = r.stability_margin {
            min_margin = min_margin.min(m);
            stability &= r.stability_holds().unwrap_or(true);
        }
    }
    summary.scalar("energy_residual_relative_max", worst);
    summary.check(Check::new(
        "energy_identity",
        identity && count > 0,
        format!("{count} steps, max |residual| / max(1, KE) = {worst:.3e} (tolerance 1e-8)"),
    ));
    if min_margin.is_finite() {
        summary.scalar("stability_margin_min", min_margin);
        summary.check(Check::new("stability", stability, format!("minimum margin {min_margin:.3e}")));
    }
}
