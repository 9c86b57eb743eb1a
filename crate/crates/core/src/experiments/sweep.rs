use std::sync::Arc;

use super::convergence::{energy_checks, integrate};
use super::{loglog_slope, parallel_map, step_count, Check, RateTable, RunSummary};
use crate::config::SimConfig;
use crate::models::{BoundarySpec, ManufacturedSolution, ModelKind, ModelSpec};
use crate::observation::{ObservationSeries, ObservationSource};
use crate::spaces::{interpolate_vector, Field};
use crate::stepping::{build_discretization, BoussinesqStepper, CnleStepper, Discretization, EnergyRecord};
use crate::Result;

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const SLOPE_BAND: (f64, f64) = (-0.65, -0.35);
/// Errors within this factor of the floor are excluded from the fit.
pub const FLOOR_MARGIN: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct ChiSweepReport {
    pub table: RateTable,
    /// Indices of `table` rows used in the fit.
    pub window: Vec<usize>,
    pub slope: Option<f64>,
    pub floor: f64,
    pub summary: RunSummary,
}

fn dns_model(config: &SimConfig) -> ModelSpec {
    ModelSpec {
        nu: config.nu,
        omega: config.omega,
        t_final: config.t_final,
        dt: config.dt,
        ..ModelSpec::manufactured(ModelKind::NseDns)
    }
}

/// Data-generating run on the manufactured flow. Returns the final velocity,
/// the recorded coarse means at every step and the energy ledger.
fn manufactured_dns(disc: &Arc<Discretization>, config: &SimConfig) -> Result<(Field, ObservationSeries, Vec<EnergyRecord>)> {
    let model = dns_model(config);
    let exact = ManufacturedSolution;
    let obs = disc.observation()?.clone();
    let mut stepper = CnleStepper::new(disc.clone(), &model, None)?.with_solver_tolerance(config.solver_tol);
    let u0 = interpolate_vector(&disc.velocity, |p, t| exact.velocity(p, t), 0.0);
    let mut state = stepper.initial_state(u0, 0.0);
    let mut series = ObservationSeries::default();
    series.push(state.time, obs.apply(&state.velocity)?)?;
    for _ in 0..step_count(config.t_final, config.dt)? {
        state = stepper.step(&state)?;
        series.push(state.time, obs.apply(&state.velocity)?)?;
    }
    Ok((state.velocity, series, stepper.take_records()))
}

/// Data-generating run of the cavity for `t_final`, recording coarse means.
fn cavity_dns(disc: &Arc<Discretization>, config: &SimConfig) -> Result<ObservationSeries> {
    let model = super::cavity::cavity_model(config).dns(config.omega);
    let obs = disc.observation()?.clone();
    let mut stepper = BoussinesqStepper::new(disc.clone(), &model, None)?.with_solver_tolerance(config.solver_tol);
    let mut state = stepper.conduction_state();
    let mut series = ObservationSeries::default();
    series.push(state.time, obs.apply(&state.velocity)?)?;
    for _ in 0..step_count(config.t_final, config.dt)? {
        state = stepper.step(&state)?;
        series.push(state.time, obs.apply(&state.velocity)?)?;
    }
    Ok(series)
}

/// Runs the data-generating model and writes `observations.csv`.
pub fn run_dns_export(config: &SimConfig) -> Result<RunSummary> {
    let disc = build_discretization(config.n, Some(config.coarse_n))?;
    let mut summary = RunSummary::new(config);
    let series = match config.boundary {
        BoundarySpec::Manufactured => {
            let (_, series, records) = manufactured_dns(&disc, config)?;
            summary.write_file("series_dns.csv", &crate::stepping::time_series_csv(&records))?;
            energy_checks(&mut summary, records.iter());
            series
        }
        BoundarySpec::Cavity => cavity_dns(&disc, config)?,
    };
    summary.scalar("samples", series.len());
    summary.scalar("coarse_cells", disc.observation()?.num_cells());
    summary.write_file(OBSERVATIONS_FILE, &series.to_csv())?;
    Ok(summary)
}

/// Model-error sweep: the data-generating model (with rotation) and the
/// nudged model (without) share mesh and step; the nudged runs see only the
/// coarse means read back from `observations.csv`.
pub fn run_chi_sweep(config: &SimConfig) -> Result<ChiSweepReport> {
    let disc = build_discretization(config.n, Some(config.coarse_n))?;
    let mut summary = RunSummary::new(config);
    let (reference, series, dns_records) = manufactured_dns(&disc, config)?;
    summary.write_file(OBSERVATIONS_FILE, &series.to_csv())?;
    let series: Arc<dyn ObservationSource> = Arc::new(ObservationSeries::read(&config.output.join(OBSERVATIONS_FILE))?);

    let mut chis = config.chi_list.clone();
    chis.sort_by(f64::total_cmp);
    let exact = ManufacturedSolution;
    let runs = parallel_map(config.worker_count(), &chis, |&chi| {
        let model = dns_model(config).nudged(chi);
        let data = (chi > 0.0).then(|| series.clone());
        let mut stepper = CnleStepper::new(disc.clone(), &model, data)?.with_solver_tolerance(config.solver_tol);
        let v0 = interpolate_vector(&disc.velocity, |p, t| exact.velocity(p, t), 0.0);
        let initial = stepper.initial_state(v0, 0.0);
        let last = integrate(&mut stepper, initial, step_count(config.t_final, config.dt)?)?;
        let mut diff = last.velocity;
        diff.axpy(-1.0, &reference);
        let error = diff.l2_norm();
        log::info!("chi = {chi:e}: E = {error:.6e}");
        Ok((error, stepper.take_records()))
    })?;
    let (errors, records): (Vec<f64>, Vec<Vec<EnergyRecord>>) = runs.into_iter().unzip();
    let table = RateTable::new(chis.clone(), errors)?;

    let floor = 1e-10 * reference.l2_norm().max(1.0);
    let window: Vec<usize> = (0..table.len()).filter(|&i| table.error[i] > FLOOR_MARGIN * floor && chis[i] > 0.0).collect();
    let (wx, wy): (Vec<f64>, Vec<f64>) = window.iter().map(|&i| (table.parameter[i], table.error[i])).unzip();
    let slope = loglog_slope(&wx, &wy);

    let mut csv = String::from("chi,error\n");
    for (c, e) in table.parameter.iter().zip(&table.error) {
        csv.push_str(&format!("{},{}\n", crate::mesh::fmt_f64(*c), crate::mesh::fmt_f64(*e)));
    }
    summary.write_file("chi_sweep.csv", &csv)?;
    summary.scalar("chi", &table.parameter);
    summary.scalar("error", &table.error);
    summary.scalar("floor", floor);
    summary.scalar("fit_window", wx.clone());
    summary.scalar("slope", slope);

    summary.check(Check::new(
        "fit_window",
        window.len() >= 2,
        format!("{} of {} errors above {FLOOR_MARGIN} x floor {floor:.3e}", window.len(), table.len()),
    ));
    let monotone = wy.windows(2).all(|w| w[1] <= w[0]);
    summary.check(Check::new("error_monotone", monotone, format!("errors in window {wy:?}")));
    let in_band = slope.is_some_and(|s| (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&s));
    summary.check(Check::new(
        "slope_in_band",
        in_band,
        format!("slope {slope:?} over chi {wx:?}, band {SLOPE_BAND:?}"),
    ));
    energy_checks(&mut summary, dns_records.iter().chain(records.iter().flatten()));
    Ok(ChiSweepReport { table, window, slope, floor, summary })
}
