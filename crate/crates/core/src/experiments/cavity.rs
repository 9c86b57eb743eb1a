use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::postprocess::{compute_nusselt, compute_vorticity_stream, NusseltProfile, WallSide};
use super::{parallel_map, Check, RunSummary};
use crate::config::SimConfig;
use crate::mesh::VtkValues;
use crate::models::{ModelKind, ModelSpec};
use crate::observation::{ObservationSeries, ObservationSource};
use crate::stepping::{build_discretization, run_to_steady, BoussinesqStepper, Discretization, FlowState};
use crate::{Error, Result};

/// Kinetic energy above which a cavity run is declared unstable.
pub const ENERGY_CAP: f64 = 1e12;
/// Allowed relative change of the wall-averaged Nusselt number under `n -> 2n`.
pub const REFINEMENT_TOLERANCE: f64 = 0.02;

pub(crate) fn cavity_model(config: &SimConfig) -> ModelSpec {
    ModelSpec {
        pr: config.pr,
        ra: config.ra,
        gamma: config.gamma,
        dt: config.dt,
        t_final: config.t_final,
        ..ModelSpec::cavity(ModelKind::BoussinesqDns)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CavityCase {
    pub name: String,
    /// `None` for the data-generating runs.
    pub chi: Option<f64>,
    pub omega: f64,
    pub steps: usize,
    pub converged: bool,
    pub final_time: f64,
    pub nusselt_hot: NusseltProfile,
    pub nusselt_average: f64,
    /// L2 distance of the steady velocity to the rotating reference.
    pub velocity_distance: Option<f64>,
    /// Sup-norm distance of the hot-wall profile to the rotating reference.
    pub nusselt_distance: Option<f64>,
    #[serde(skip)]
    pub state: Option<FlowState>,
}

#[derive(Clone, Debug)]
pub struct CavityReport {
    pub cases: Vec<CavityCase>,
    /// Wall-averaged Nusselt number of the rotation-free run at `n` and `2n`.
    pub refinement: Option<(f64, f64)>,
    pub summary: RunSummary,
}

impl CavityReport {
    pub fn case(&self, name: &str) -> Option<&CavityCase> {
        self.cases.iter().find(|c| c.name == name)
    }

    /// `(chi, D(chi), Nusselt sup distance)` for the nudged cases, by increasing `chi`.
    pub fn nudged(&self) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64)> = self
            .cases
            .iter()
            .filter_map(|c| Some((c.chi?, c.velocity_distance?, c.nusselt_distance?)))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// Runs one cavity model from the conduction state to steady state.
fn steady_case(
    disc: &Arc<Discretization>,
    config: &SimConfig,
    name: String,
    model: &ModelSpec,
    data: Option<Arc<dyn ObservationSource>>,
    mut observe: impl FnMut(&FlowState),
) -> Result<CavityCase> {
    let mut stepper = BoussinesqStepper::new(disc.clone(), model, data)?.with_solver_tolerance(config.solver_tol);
    let initial = stepper.conduction_state();
    let outcome = run_to_steady(&mut stepper, initial, config.steady_tol, config.max_steps, ENERGY_CAP, &mut observe)?;
    let temperature = outcome.state.temperature.as_ref().expect("Boussinesq state carries temperature");
    let nusselt_hot = compute_nusselt(temperature, WallSide::Hot);
    log::info!(
        "{name}: {} steps (t = {:.4}), converged {}, Nu = {:.6}",
        outcome.steps,
        outcome.state.time,
        outcome.converged,
        nusselt_hot.average()
    );
    Ok(CavityCase {
        name,
        chi: model.kind.is_nudged().then_some(model.chi),
        omega: model.rotation(),
        steps: outcome.steps,
        converged: outcome.converged,
        final_time: outcome.state.time,
        nusselt_average: nusselt_hot.average(),
        nusselt_hot,
        velocity_distance: None,
        nusselt_distance: None,
        state: Some(outcome.state),
    })
}

fn fields_vtk(disc: &Discretization, case: &CavityCase) -> Result<String> {
    let state = case.state.as_ref().ok_or_else(|| Error::Config(format!("case {} has no fields", case.name)))?;
    let (vorticity, stream) = compute_vorticity_stream(&state.velocity)?;
    let velocity = state.velocity.vertex_values();
    let scalar = |f: &crate::spaces::Field| f.vertex_values().into_iter().map(|v| v[0]).collect::<Vec<f64>>();
    let temperature = state.temperature.as_ref().map(scalar).unwrap_or_default();
    let (vorticity, stream) = (scalar(&vorticity), scalar(&stream));
    let pressure = scalar(&state.pressure);
    Ok(disc.mesh.to_vtk(
        &case.name,
        &[
            ("velocity", VtkValues::Vectors(&velocity)),
            ("temperature", VtkValues::Scalars(&temperature)),
            ("pressure", VtkValues::Scalars(&pressure)),
            ("vorticity", VtkValues::Scalars(&vorticity)),
            ("streamfunction", VtkValues::Scalars(&stream)),
        ],
        &[],
    ))
}

/// Differentially heated cavity: the rotation-free and rotating
/// data-generating runs, then the rotation-free nudged runs for each `chi`
/// assimilating the coarse means of the rotating run.
pub fn run_double_pane(config: &SimConfig) -> Result<CavityReport> {
    let disc = build_discretization(config.n, Some(config.coarse_n))?;
    let obs = disc.observation()?.clone();
    let base = cavity_model(config);
    let mut summary = RunSummary::new(config);

    let plain = steady_case(&disc, config, "dns".into(), &base.dns(0.0), None, |_| {})?;

    let series = Mutex::new(ObservationSeries::default());
    {
        let initial = BoussinesqStepper::new(disc.clone(), &base, None)?.conduction_state();
        series.lock().expect("fresh lock").push(0.0, obs.apply(&initial.velocity)?)?;
    }
    let mut record_error = None;
    let rotating = steady_case(&disc, config, "dns_coriolis".into(), &base.dns(config.omega), None, |s| {
        let pushed = obs.apply(&s.velocity).and_then(|m| series.lock().expect("single writer").push(s.time, m));
        if let Err(e) = pushed {
            record_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = record_error {
        return Err(e);
    }
    let series = series.into_inner().expect("single writer");
    summary.scalar("observation_samples", series.len());
    let data: Arc<dyn ObservationSource> = Arc::new(series);

    let reference_state = rotating.state.as_ref().expect("fields kept").clone();
    let mut chis = config.chi_list.clone();
    chis.sort_by(f64::total_cmp);
    chis.dedup();
    let nudged = parallel_map(config.worker_count(), &chis, |&chi| {
        let mut case = steady_case(&disc, config, format!("nudged_chi{chi}"), &base.nudged(chi), Some(data.clone()), |_| {})?;
        let state = case.state.as_ref().expect("fields kept");
        let mut diff = state.velocity.clone();
        diff.axpy(-1.0, &reference_state.velocity);
        case.velocity_distance = Some(diff.l2_norm());
        case.nusselt_distance = Some(case.nusselt_hot.sup_distance(&rotating.nusselt_hot)?);
        Ok(case)
    })?;

    let refinement = if config.refine_check {
        let fine = build_discretization(2 * config.n, None)?;
        let case = steady_case(&fine, config, format!("dns_n{}", 2 * config.n), &base.dns(0.0), None, |_| {})?;
        summary.check(Check::new(
            "refined_steady",
            case.converged,
            format!("{} steps, converged {}", case.steps, case.converged),
        ));
        Some((plain.nusselt_average, case.nusselt_average))
    } else {
        None
    };

    let mut cases = vec![plain, rotating];
    cases.extend(nudged);
    for case in &cases {
        summary.write_file(&format!("nusselt_{}.csv", case.name), &case.nusselt_hot.to_csv())?;
        summary.write_file(&format!("fields_{}.vtk", case.name), &fields_vtk(&disc, case)?)?;
    }
    summary.scalar("cases", &cases);

    let all_steady: Vec<&str> = cases.iter().filter(|c| !c.converged).map(|c| c.name.as_str()).collect();
    summary.check(Check::new(
        "steady_state",
        all_steady.is_empty(),
        format!("not converged within {} steps: {all_steady:?}", config.max_steps),
    ));
    let report = CavityReport { cases, refinement, summary };
    let rows = report.nudged();
    let mut summary = report.summary;
    let d: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let nu: Vec<f64> = rows.iter().map(|r| r.2).collect();
    summary.scalar("chi", rows.iter().map(|r| r.0).collect::<Vec<_>>());
    summary.scalar("velocity_distance", &d);
    summary.scalar("nusselt_distance", &nu);
    summary.check(Check::new(
        "velocity_distance_decreasing",
        d.len() >= 2 && d.windows(2).all(|w| w[1] < w[0]),
        format!("D(chi) = {d:?}"),
    ));
    summary.check(Check::new(
        "nusselt_distance_decreasing",
        nu.len() >= 2 && nu.windows(2).all(|w| w[1] < w[0]),
        format!("sup |Nu - Nu_ref| = {nu:?}"),
    ));
    if let Some((coarse, fine)) = report.refinement {
        let change = (coarse - fine).abs() / fine.abs();
        summary.scalar("nusselt_average_refined", fine);
        summary.scalar("nusselt_refinement_change", change);
        summary.check(Check::new(
            "nusselt_refinement",
            change <= REFINEMENT_TOLERANCE,
            format!("Nu(n) = {coarse:.6}, Nu(2n) = {fine:.6}, change {:.3}%", 100.0 * change),
        ));
    }
    Ok(CavityReport { cases: report.cases, refinement: report.refinement, summary })
}
