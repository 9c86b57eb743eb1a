use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nudge_core::config::{ConfigOverrides, Experiment, SimConfig};
use nudge_core::experiments::run_experiment;

/// Nudging data assimilation with model error: finite element experiments.
#[derive(Parser, Debug)]
#[command(name = "nudge-ns", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Temporal convergence on the manufactured flow.
    Converge(Overrides),
    /// Error against the rotating reference as the nudging strength grows.
    ChiSweep(Overrides),
    /// Exponential decay of the initial error.
    Decay(Overrides),
    /// Differentially heated cavity with and without rotation.
    Cavity(Overrides),
    /// Run the data-generating model and write the observation CSV.
    DnsExport(Overrides),
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent sweep members.
    #[arg(long)]
    jobs: Option<usize>,
    /// Fine mesh cells per side.
    #[arg(long)]
    n: Option<usize>,
    /// Observation cells per side (H = 1 / coarse_n).
    #[arg(long)]
    coarse_n: Option<usize>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',')]
    dt_list: Option<Vec<f64>>,
    /// Final time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Kinematic viscosity.
    #[arg(long)]
    nu: Option<f64>,
    /// Rotation rate of the data-generating model.
    #[arg(long)]
    omega: Option<f64>,
    /// Nudging strength.
    #[arg(long)]
    chi: Option<f64>,
    /// Comma-separated nudging strengths.
    #[arg(long, value_delimiter = ',')]
    chi_list: Option<Vec<f64>>,
    /// Prandtl number.
    #[arg(long)]
    pr: Option<f64>,
    /// Rayleigh number.
    #[arg(long)]
    ra: Option<f64>,
    /// Heat source.
    #[arg(long)]
    gamma: Option<f64>,
    /// Steady-state tolerance on the velocity and temperature change rates.
    #[arg(long)]
    steady_tol: Option<f64>,
    /// Step cap for steady-state runs.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Relative residual tolerance of the linear solves.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Cavity: repeat the rotation-free run at 2n (true/false).
    #[arg(long)]
    refine_check: Option<bool>,
}

impl Overrides {
    fn into_config(self, experiment: Experiment) -> nudge_core::Result<SimConfig> {
        let file = match &self.config {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            experiment: Some(experiment),
            n: self.n,
            coarse_n: self.coarse_n,
            dt: self.dt,
            dt_list: self.dt_list,
            t_final: self.t_final,
            nu: self.nu,
            omega: self.omega,
            chi: self.chi,
            chi_list: self.chi_list,
            pr: self.pr,
            ra: self.ra,
            gamma: self.gamma,
            boundary: None,
            output: self.out,
            steady_tol: self.steady_tol,
            max_steps: self.max_steps,
            solver_tol: self.solver_tol,
            jobs: self.jobs,
            refine_check: self.refine_check,
            q0: None,
            c2: None,
        };
        SimConfig::resolve(file.merge(flags), None)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (experiment, overrides) = match cli.command {
        Command::Converge(o) => (Experiment::Converge, o),
        Command::ChiSweep(o) => (Experiment::ChiSweep, o),
        Command::Decay(o) => (Experiment::Decay, o),
        Command::Cavity(o) => (Experiment::Cavity, o),
        Command::DnsExport(o) => (Experiment::DnsExport, o),
    };
    let config = match overrides.into_config(experiment) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Ok(text) = serde_json::to_string(&config) {
        log::info!("effective config: {text}");
    }
    match run_experiment(&config) {
        Ok(summary) => {
            for check in &summary.checks {
                println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
            }
            println!("summary: {}", config.output.join("summary.json").display());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
