use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::models::{BoundarySpec, ForcingSpec, ModelKind, ModelSpec};
use crate::observation::{AnalyticObservations, ObservationSeries, ObservationSource};
use crate::spaces::interpolate_vector;

fn vortex(p: Point) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    [PI * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(), -PI * (2.0 * PI * x).sin() * (PI * y).sin().powi(2)]
}

fn cavity_nse(kind: ModelKind, chi: f64, dt: f64) -> ModelSpec {
    ModelSpec {
        boundary: BoundarySpec::Cavity,
        forcing: ForcingSpec::Zero,
        omega: 0.0,
        chi,
        dt,
        ..ModelSpec::manufactured(kind)
    }
}

#[test]
fn zero_state_is_a_fixed_point() {
    let disc = build_discretization(4, Some(2)).unwrap();
    let mut data = ObservationSeries::default();
    data.push(0.0, vec![0.0; 2 * disc.observation().unwrap().num_cells()]).unwrap();
    let model = cavity_nse(ModelKind::NseNudged, 50.0, 0.1);
    let mut stepper = CnleStepper::new(disc.clone(), &model, Some(Arc::new(data))).unwrap();
    let mut state = stepper.initial_state(Field::zeros(disc.velocity.clone()), 0.0);
    for _ in 0..5 {
        state = stepper.step(&state).unwrap();
        assert!(state.velocity.coeffs.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unforced_flow_loses_energy() {
    let disc = build_discretization(6, None).unwrap();
    let model = cavity_nse(ModelKind::NseDns, 0.0, 0.05);
    let mut stepper = CnleStepper::new(disc.clone(), &model, None).unwrap();
    let mut state = stepper.initial_state(interpolate_vector(&disc.velocity, |p, _| vortex(p), 0.0), 0.0);
    let mut energy = state.kinetic_energy(&disc);
    for _ in 0..10 {
        state = stepper.step(&state).unwrap();
        let e = state.kinetic_energy(&disc);
        assert!(e <= energy);
        energy = e;
    }
    for r in stepper.records() {
        assert!(r.identity_holds(), "{r:?}");
        assert!(r.stability_holds().unwrap());
        assert!(r.div_residual <= DIVERGENCE_TOLERANCE);
    }
}

#[test]
fn energy_identity_with_boundary_data_and_nudging() {
    let disc = build_discretization(4, Some(2)).unwrap();
    let model = ModelSpec { dt: 0.25, ..ModelSpec::manufactured(ModelKind::NseNudged) };
    let ms = crate::models::ManufacturedSolution;
    let data: Arc<dyn ObservationSource> =
        Arc::new(AnalyticObservations::new(disc.observation().unwrap().clone(), move |p, t| ms.velocity(p, t)));
    let mut stepper = CnleStepper::new(disc.clone(), &model, Some(data))
        .unwrap()
        .with_reference(move |p, t| ms.velocity(p, t));
    let mut state = stepper.initial_state(Field::zeros(disc.velocity.clone()), 0.0);
    for _ in 0..4 {
        state = stepper.step(&state).unwrap();
    }
    for r in stepper.records() {
        assert!(r.identity_holds(), "{r:?}");
        assert!(r.boundary_work != 0.0);
        assert!(r.div_residual <= DIVERGENCE_TOLERANCE);
        assert!(r.err_l2.is_some());
    }
}

#[test]
fn stability_inequality_with_forcing_and_data_at_unit_step() {
    let disc = build_discretization(4, Some(2)).unwrap();
    let model = cavity_nse(ModelKind::NseNudged, 30.0, 1.0);
    let data: Arc<dyn ObservationSource> =
        Arc::new(AnalyticObservations::new(disc.observation().unwrap().clone(), |p, t| {
            let v = vortex(p);
            [(1.0 + t) * v[0], (1.0 + t) * v[1]]
        }));
    let mut stepper = CnleStepper::new(disc.clone(), &model, Some(data))
        .unwrap()
        .with_forcing(|p, t| [10.0 * (p[1] - 0.5) * (1.0 + t), 3.0 * p[0]]);
    let mut state = stepper.initial_state(Field::zeros(disc.velocity.clone()), 0.0);
    for _ in 0..3 {
        state = stepper.step(&state).unwrap();
    }
    for r in stepper.records() {
        assert!(r.identity_holds(), "{r:?}");
        assert!(r.stability_holds().unwrap(), "{r:?}");
        assert!(r.stability_margin.unwrap() > 0.0);
    }
}

#[test]
fn lid_driven_stokes_is_discretely_divergence_free() {
    let disc = build_discretization(4, None).unwrap();
    let mut system = SaddleSystem::new(&disc, false).unwrap();
    let constraints = disc.velocity_constraints(|p| if p[1] == 1.0 { [1.0, 0.0] } else { [0.0, 0.0] });
    let rhs = vec![0.0; disc.velocity.num_dofs()];
    let sol = system.solve(&disc, &[(1.0, &disc.stiffness)], 0.0, &rhs, &constraints).unwrap();
    assert!(disc.divergence_residual(&sol.velocity) <= 1e-9);
    assert!(sol.relative_residual <= RESIDUAL_TOLERANCE);
    // pressure has zero mean
    let ones = vec![1.0; sol.pressure.len()];
    assert!(disc.pressure_mass.bilinear(&ones, &sol.pressure).abs() < 1e-12);
    // the lid drives a clockwise vortex: u_x < 0 near the bottom center
    let probe = (0..disc.velocity.num_nodes())
        .find(|&k| {
            let p = disc.velocity.node_coords()[k];
            (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12
        })
        .unwrap();
    assert!(sol.velocity[2 * probe] < 0.0);
}

#[test]
fn flux_correction_only_touches_inconsistent_data() {
    let disc = build_discretization(4, None).unwrap();
    let zero = disc.velocity_constraints(|_| [0.0, 0.0]);
    assert!(zero.iter().all(|&(_, v)| v == 0.0));
    let uniform = disc.velocity_constraints(|_| [1.0, -2.0]);
    for (d, v) in uniform {
        assert!((v - if d % 2 == 0 { 1.0 } else { -2.0 }).abs() < 1e-13);
    }
}

#[test]
fn conduction_is_steady() {
    let disc = build_discretization(4, None).unwrap();
    let model = ModelSpec { ra: 0.0, dt: 0.01, ..ModelSpec::cavity(ModelKind::BoussinesqDns) };
    let mut stepper = BoussinesqStepper::new(disc.clone(), &model, None).unwrap();
    let start = stepper.conduction_state();
    let out = run_to_steady(&mut stepper, start, 1e-6, 20, 1e6, |_| {}).unwrap();
    assert!(out.converged);
    assert!(out.steps <= 2);
    let t = out.state.temperature.unwrap();
    assert!(t.l2_error(|p| [1.0 - p[0], 0.0]) < 1e-10);
    assert!(out.state.velocity.coeffs.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn buoyancy_drives_circulation() {
    let disc = build_discretization(4, None).unwrap();
    let model = ModelSpec { ra: 1e3, dt: 0.01, ..ModelSpec::cavity(ModelKind::BoussinesqDns) };
    let mut stepper = BoussinesqStepper::new(disc.clone(), &model, None).unwrap();
    let mut state = stepper.conduction_state();
    for _ in 0..3 {
        state = stepper.step(&state).unwrap();
    }
    assert!(state.kinetic_energy(&disc) > 0.0);
    for r in stepper.records() {
        assert!(r.div_residual <= DIVERGENCE_TOLERANCE);
    }
}

#[test]
fn single_step_helpers() {
    let disc = build_discretization(2, None).unwrap();
    let model = cavity_nse(ModelKind::NseDns, 0.0, 0.1);
    let state = FlowState::new(&disc, Field::zeros(disc.velocity.clone()), 0.0);
    let (next, record) = cnle_step(&disc, &state, &model, None).unwrap();
    assert_eq!(next.step, 1);
    assert!((next.time - 0.1).abs() < 1e-15);
    assert_eq!(record.kinetic, 0.0);
    let bmodel = ModelSpec::cavity(ModelKind::BoussinesqDns);
    assert!(bdf2_boussinesq_step(&disc, &state, &bmodel, None).is_err());
    let nudged = cavity_nse(ModelKind::NseNudged, 1.0, 0.1);
    assert!(CnleStepper::new(disc, &nudged, None).is_err());
}
