use std::sync::Arc;

use serde::Serialize;

use super::{exponential_rate, parallel_map, Check, RunSummary};
use crate::config::SimConfig;
use crate::mesh::fmt_f64;
use crate::models::{ManufacturedSolution, ModelKind, ModelSpec};
use crate::observation::{ObservationSeries, ObservationSource};
use crate::spaces::{interpolate_vector, Field};
use crate::stepping::{build_discretization, CnleStepper, Discretization};
use crate::{Error, Result};

/// Steps per run; the step size scales as `DECAY_STEP_SCALE / (chi + DECAY_STEP_SHIFT)`
/// so every run resolves its own decay time.
pub const DECAY_STEPS: usize = 200;
pub const DECAY_STEP_SCALE: f64 = 0.2;
pub const DECAY_STEP_SHIFT: f64 = 20.0;
/// The fit stops once the error has dropped this many decades (or reaches the floor).
pub const DECAY_FIT_DECADES: f64 = 6.0;
/// Pair used for the linear-regime check.
pub const DOUBLING_PAIR: (f64, f64) = (10.0, 20.0);
pub const DOUBLING_BAND: (f64, f64) = (1.5, 2.5);

#[derive(Clone, Debug, Serialize)]
pub struct DecaySeries {
    pub chi: f64,
    pub dt: f64,
    pub t: Vec<f64>,
    pub err: Vec<f64>,
    /// Fitted `r` in `||e(t)|| ~ exp(-r t)`.
    pub rate: Option<f64>,
    pub fit_end: f64,
}

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub series: Vec<DecaySeries>,
    pub summary: RunSummary,
}

impl DecayReport {
    pub fn rate(&self, chi: f64) -> Option<f64> {
        self.series.iter().find(|s| s.chi == chi).and_then(|s| s.rate)
    }
}

pub fn decay_step(chi: f64) -> f64 {
    DECAY_STEP_SCALE / (chi + DECAY_STEP_SHIFT)
}

/// One transient run: the data-generating model from the exact initial
/// velocity and the nudged model from the Stokes extension of the boundary
/// data (no interior information), stepped in lockstep on the same mesh with
/// the same step.
fn decay_run(disc: &Arc<Discretization>, config: &SimConfig, chi: f64) -> Result<DecaySeries> {
    let dt = decay_step(chi);
    let base = ModelSpec {
        nu: config.nu,
        omega: config.omega,
        t_final: DECAY_STEPS as f64 * dt,
        dt,
        ..ModelSpec::manufactured(ModelKind::NseDns)
    };
    let exact = ManufacturedSolution;
    let obs = disc.observation()?.clone();
    let mut dns = CnleStepper::new(disc.clone(), &base, None)?.with_solver_tolerance(config.solver_tol);
    let mut u = dns.initial_state(interpolate_vector(&disc.velocity, |p, t| exact.velocity(p, t), 0.0), 0.0);

    let series = Arc::new(std::sync::RwLock::new(ObservationSeries::default()));
    series.write().map_err(poisoned)?.push(0.0, obs.apply(&u.velocity)?)?;
    let source: Arc<dyn ObservationSource> = Arc::new(SharedSeries(series.clone()));
    let mut nudged = CnleStepper::new(disc.clone(), &base.nudged(chi), (chi > 0.0).then_some(source))?
        .with_solver_tolerance(config.solver_tol);
    let g0 = crate::models::boundary_velocity(base.boundary, crate::mesh::Side::Left, 0.0);
    let mut v = nudged.initial_state(disc.stokes_extension(g0)?, 0.0);

    let error = |a: &Field, b: &Field| {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.l2_norm()
    };
    let mut t = vec![0.0];
    let mut err = vec![error(&v.velocity, &u.velocity)];
    for _ in 0..DECAY_STEPS {
        u = dns.step(&u)?;
        series.write().map_err(poisoned)?.push(u.time, obs.apply(&u.velocity)?)?;
        v = nudged.step(&v)?;
        t.push(v.time);
        err.push(error(&v.velocity, &u.velocity));
    }

    let floor = 10.0 * 1e-10 * u.velocity.l2_norm().max(1.0);
    let cutoff = (err[0] * 10f64.powf(-DECAY_FIT_DECADES)).max(floor);
    let end = err.iter().position(|&e| e <= cutoff).unwrap_or(err.len());
    let rate = exponential_rate(&t[..end], &err[..end], floor);
    let fit_end = t[end.saturating_sub(1)];
    log::info!("chi = {chi}: dt = {dt:.3e}, rate {rate:?} fitted on t <= {fit_end:.3e}");
    Ok(DecaySeries { chi, dt, t, err, rate, fit_end })
}

fn poisoned<T>(_: T) -> Error {
    Error::Observation("observation buffer poisoned".into())
}

struct SharedSeries(Arc<std::sync::RwLock<ObservationSeries>>);

impl ObservationSource for SharedSeries {
    fn coarse_means(&self, t: f64) -> Result<Vec<f64>> {
        self.0.read().map_err(poisoned)?.coarse_means(t)
    }
}

/// Transient decay of the error from a wrong initial condition with the
/// omitted term switched off. Rates for `chi_list`, plus the nudging-free
/// run and the doubling pair used to check the linear regime.
pub fn run_decay(config: &SimConfig) -> Result<DecayReport> {
    let disc = build_discretization(config.n, Some(config.coarse_n))?;
    let mut chis: Vec<f64> = config.chi_list.clone();
    chis.extend([0.0, DOUBLING_PAIR.0, DOUBLING_PAIR.1]);
    chis.sort_by(f64::total_cmp);
    chis.dedup();
    let series = parallel_map(config.worker_count(), &chis, |&chi| decay_run(&disc, config, chi))?;

    let mut summary = RunSummary::new(config);
    for s in &series {
        let mut csv = String::from("t,err\n");
        for (t, e) in s.t.iter().zip(&s.err) {
            csv.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*e)));
        }
        summary.write_file(&format!("decay_{}.csv", s.chi), &csv)?;
    }
    let rate_of = |chi: f64| series.iter().find(|s| s.chi == chi).and_then(|s| s.rate);
    let rates: Vec<(f64, Option<f64>)> = series.iter().map(|s| (s.chi, s.rate)).collect();
    summary.scalar("rates", &rates);

    let mut listed = config.chi_list.clone();
    listed.sort_by(f64::total_cmp);
    listed.dedup();
    let listed_rates: Vec<Option<f64>> = listed.iter().map(|&c| rate_of(c)).collect();
    let increasing = listed_rates.iter().all(Option::is_some)
        && listed_rates.windows(2).all(|w| w[1].unwrap() > w[0].unwrap());
    summary.check(Check::new(
        "rate_increasing",
        increasing,
        format!("chi {listed:?}: rates {listed_rates:?}"),
    ));

    let ratio = match (rate_of(DOUBLING_PAIR.0), rate_of(DOUBLING_PAIR.1)) {
        (Some(a), Some(b)) => Some(b / a),
        _ => None,
    };
    summary.scalar("baseline_rate", rate_of(0.0));
    summary.scalar("doubling_ratio", ratio);
    summary.check(Check::new(
        "doubling_ratio",
        ratio.is_some_and(|r| (DOUBLING_BAND.0..=DOUBLING_BAND.1).contains(&r)),
        format!("chi {DOUBLING_PAIR:?}: r2 / r1 = {ratio:?}, band {DOUBLING_BAND:?}"),
    ));
    Ok(DecayReport { series, summary })
}
