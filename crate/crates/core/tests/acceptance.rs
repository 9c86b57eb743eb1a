//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are measured and reported like the
//! others, but only unexpected failures make the run exit nonzero (set
//! `NUDGE_ACCEPTANCE_STRICT=1` to fail on any). `NUDGE_ACCEPTANCE_CAVITY_N`
//! sets the cavity mesh (default 32).

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nudge_core::assembly::{assemble_convection, assemble_coriolis, assemble_forcing, inf_sup_constant};
use nudge_core::config::{Experiment, SimConfig};
use nudge_core::experiments::{run_chi_sweep, run_convergence, run_decay, run_double_pane, RunSummary};
use nudge_core::mesh::{signed_area, Point};
use nudge_core::models::{BoundarySpec, ForcingSpec, ModelKind, ModelSpec};
use nudge_core::observation::{AnalyticObservations, ObservationOperator, ObservationSource};
use nudge_core::spaces::{interpolate_vector, Field};
use nudge_core::stepping::{build_discretization, CnleStepper, EnergyRecord, DIVERGENCE_TOLERANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: &[&str] = &["model_error_slope"];
const INVARIANT_TOLERANCE: f64 = 1e-12;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn checks_passed(summary: &RunSummary, names: &[&str]) -> (bool, String) {
    let mut passed = true;
    let mut detail = Vec::new();
    for name in names {
        match summary.checks.iter().find(|c| c.name == *name) {
            Some(c) => {
                passed &= c.passed;
                detail.push(format!("{}: {}", c.name, c.detail));
            }
            None => {
                passed = false;
                detail.push(format!("{name}: missing"));
            }
        }
    }
    (passed, detail.join("; "))
}

fn config(experiment: Experiment, out: &std::path::Path) -> SimConfig {
    let mut c = SimConfig::defaults(experiment);
    c.output = out.join(experiment.name());
    c
}

fn max_div(records: &[EnergyRecord]) -> f64 {
    records.iter().map(|r| r.div_residual).fold(0.0, f64::max)
}

/// Nudged flow with no-slip walls, forcing and data, for each step size down from 1.
fn homogeneous_stability() -> (bool, String, f64) {
    let disc = build_discretization(8, Some(4)).expect("mesh");
    let mut ok = true;
    let mut worst_margin = f64::INFINITY;
    let mut worst_div: f64 = 0.0;
    let mut steps = 0;
    for dt in [1.0, 0.5, 0.25, 0.125] {
        let model = ModelSpec {
            boundary: BoundarySpec::Cavity,
            forcing: ForcingSpec::Zero,
            omega: 0.0,
            chi: 100.0,
            dt,
            ..ModelSpec::manufactured(ModelKind::NseNudged)
        };
        let data: Arc<dyn ObservationSource> =
            Arc::new(AnalyticObservations::new(disc.observation().unwrap().clone(), |p: Point, t: f64| {
                let s = (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin();
                [(1.0 + t) * s, -s * p[0]]
            }));
        let mut stepper = CnleStepper::new(disc.clone(), &model, Some(data))
            .expect("stepper")
            .with_forcing(|p, t| [10.0 * (p[1] - 0.5) * (1.0 + t), 3.0 * p[0]]);
        let mut state = stepper.initial_state(Field::zeros(disc.velocity.clone()), 0.0);
        for _ in 0..(2.0 / dt).round() as usize {
            state = stepper.step(&state).expect("step");
        }
        for r in stepper.records() {
            steps += 1;
            ok &= r.identity_holds() && r.stability_holds().unwrap_or(false);
            worst_margin = worst_margin.min(r.stability_margin.unwrap_or(f64::NEG_INFINITY));
        }
        worst_div = worst_div.max(max_div(stepper.records()));
    }
    (ok, format!("no-slip nudged runs dt = 1 .. 1/8: {steps} steps, min stability margin {worst_margin:.3e}"), worst_div)
}

fn coarse_cell(op: &ObservationOperator, p: Point) -> usize {
    let mesh = op.coarse_mesh();
    (0..mesh.num_triangles())
        .find(|&c| {
            let [a, b, d] = mesh.triangle_points(c);
            signed_area(a, b, p) >= -1e-14 && signed_area(b, d, p) >= -1e-14 && signed_area(d, a, p) >= -1e-14
        })
        .expect("point inside the unit square")
}

fn structural(div_from_runs: f64) -> (bool, String) {
    let disc = build_discretization(4, Some(2)).expect("mesh");
    let vel = &disc.velocity;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random = |len: usize| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let op = disc.observation().unwrap().clone();

    let (mut skew, mut coriolis, mut idem, mut adjoint, mut contraction) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    let c = assemble_coriolis(vel);
    for _ in 0..20 {
        let a = Field::from_coeffs(vel.clone(), random(vel.num_dofs())).unwrap();
        let v = Field::from_coeffs(vel.clone(), random(vel.num_dofs())).unwrap();
        let w = Field::from_coeffs(vel.clone(), random(vel.num_dofs())).unwrap();
        skew = skew.max(assemble_convection(&a, vel).bilinear(&v.coeffs, &v.coeffs).abs());
        coriolis = coriolis.max(c.bilinear(&v.coeffs, &v.coeffs).abs());

        let (iv, iw) = (op.apply(&v).unwrap(), op.apply(&w).unwrap());
        let piecewise = |means: &[f64]| {
            let means = means.to_vec();
            let op = op.clone();
            move |p: Point| {
                let k = coarse_cell(&op, p);
                [means[2 * k], means[2 * k + 1]]
            }
        };
        let again = op.means_of(piecewise(&iv));
        idem = idem.max(iv.iter().zip(&again).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        // (I_H v, w) and (v, I_H w) by quadrature on the fine mesh
        let f_iv = piecewise(&iv);
        let f_iw = piecewise(&iw);
        let lhs: f64 = assemble_forcing(move |p, _| f_iv(p), 0.0, vel).iter().zip(&w.coeffs).map(|(x, y)| x * y).sum();
        let rhs: f64 = assemble_forcing(move |p, _| f_iw(p), 0.0, vel).iter().zip(&v.coeffs).map(|(x, y)| x * y).sum();
        adjoint = adjoint.max((lhs - rhs).abs()).max((lhs - op.coarse_inner(&iv, &iw)).abs());
        let norm = disc.mass.bilinear(&v.coeffs, &v.coeffs).sqrt();
        contraction = contraction.min(norm - op.coarse_norm(&iv));
    }
    let beta = inf_sup_constant(&disc.velocity, &disc.pressure).unwrap_or(0.0);

    // no-slip Stokes extension of a lid, checked after the solve
    let lid = disc.stokes_extension(|p| if p[1] == 1.0 { [1.0, 0.0] } else { [0.0, 0.0] }).expect("solve");
    let div = disc.divergence_residual(&lid.coeffs).max(div_from_runs);
    let smooth = interpolate_vector(&disc.velocity, |p, _| [p[1], -p[0]], 0.0);
    let div_interp = disc.divergence_residual(&smooth.coeffs);

    let passed = skew <= INVARIANT_TOLERANCE
        && coriolis <= INVARIANT_TOLERANCE
        && idem <= INVARIANT_TOLERANCE
        && adjoint <= INVARIANT_TOLERANCE
        && contraction >= -INVARIANT_TOLERANCE
        && div <= DIVERGENCE_TOLERANCE
        && div_interp <= DIVERGENCE_TOLERANCE
        && beta > INVARIANT_TOLERANCE;
    let detail = format!(
        "|v'N(a)v| {skew:.1e}, |v'Cv| {coriolis:.1e}, I_H idempotence {idem:.1e}, self-adjointness {adjoint:.1e}, \
         min(||v|| - ||I_H v||) {contraction:.3e}, max post-solve div {div:.1e}, inf-sup (n = 4) {beta:.4}"
    );
    (passed, detail)
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags; `--list` must not run the experiments
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let strict = std::env::var("NUDGE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let cavity_n: usize = std::env::var("NUDGE_ACCEPTANCE_CAVITY_N").ok().and_then(|v| v.parse().ok()).unwrap_or(32);
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path();
    let mut outcomes = Vec::new();
    let mut log = |o: Outcome, started: Instant| {
        let known = KNOWN_FAILURES.contains(&o.name);
        let tag = match (o.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} {}: {} [{:.0} s]", o.name, o.detail, started.elapsed().as_secs_f64());
        outcomes.push(o);
    };

    let t = Instant::now();
    let conv = run_convergence(&config(Experiment::Converge, out)).expect("convergence run");
    let (passed, detail) = checks_passed(&conv.summary, &["errors_decrease", "rates_in_band"]);
    log(Outcome { name: "temporal_convergence", passed, detail }, t);

    let t = Instant::now();
    let sweep = run_chi_sweep(&config(Experiment::ChiSweep, out)).expect("chi sweep");
    let (passed, detail) = checks_passed(&sweep.summary, &["fit_window", "slope_in_band"]);
    log(Outcome { name: "model_error_slope", passed, detail }, t);

    let t = Instant::now();
    let decay = run_decay(&config(Experiment::Decay, out)).expect("decay run");
    let (passed, detail) = checks_passed(&decay.summary, &["rate_increasing", "doubling_ratio"]);
    log(Outcome { name: "exponential_transient", passed, detail }, t);

    let t = Instant::now();
    let (stable, stable_detail, stable_div) = homogeneous_stability();
    let (conv_ok, conv_detail) = checks_passed(&conv.summary, &["energy_identity"]);
    let (sweep_ok, sweep_detail) = checks_passed(&sweep.summary, &["energy_identity"]);
    log(
        Outcome {
            name: "energy_identity_and_stability",
            passed: stable && conv_ok && sweep_ok,
            detail: format!("convergence {conv_detail}; chi sweep {sweep_detail}; {stable_detail}"),
        },
        t,
    );

    let t = Instant::now();
    let run_div = conv.records.iter().map(|r| max_div(r)).fold(stable_div, f64::max);
    let (passed, detail) = structural(run_div);
    log(Outcome { name: "structural_invariants", passed, detail }, t);

    let t = Instant::now();
    let mut cavity = config(Experiment::Cavity, out);
    cavity.n = cavity_n;
    let pane = run_double_pane(&cavity).expect("cavity run");
    let (passed, detail) =
        checks_passed(&pane.summary, &["velocity_distance_decreasing", "nusselt_distance_decreasing"]);
    log(Outcome { name: "double_pane_monotone_approach", passed, detail: format!("n = {cavity_n}: {detail}") }, t);
    let (passed, detail) = checks_passed(&pane.summary, &["nusselt_refinement"]);
    log(Outcome { name: "nusselt_refinement", passed, detail }, Instant::now());

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    let unexpected: Vec<&str> = failed.iter().copied().filter(|n| strict || !KNOWN_FAILURES.contains(n)).collect();
    println!("{} of {} criteria pass; failing: {failed:?}", outcomes.len() - failed.len(), outcomes.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
