//! Run configuration: JSON documents with per-experiment defaults and
//! scalar overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::models::BoundarySpec;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Converge,
    ChiSweep,
    Decay,
    Cavity,
    DnsExport,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Converge => "converge",
            Experiment::ChiSweep => "chi-sweep",
            Experiment::Decay => "decay",
            Experiment::Cavity => "cavity",
            Experiment::DnsExport => "dns-export",
        }
    }

    pub fn parse(s: &str) -> Result<Experiment> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Fully resolved configuration (every key present).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub experiment: Experiment,
    /// Fine mesh: `n x n` squares, each split in two triangles.
    pub n: usize,
    /// Coarse observation mesh resolution (`H = 1 / coarse_n`).
    pub coarse_n: usize,
    pub dt: f64,
    pub dt_list: Vec<f64>,
    pub t_final: f64,
    pub nu: f64,
    pub omega: f64,
    pub chi: f64,
    pub chi_list: Vec<f64>,
    pub pr: f64,
    pub ra: f64,
    pub gamma: f64,
    pub boundary: BoundarySpec,
    pub output: PathBuf,
    pub steady_tol: f64,
    pub max_steps: usize,
    pub solver_tol: f64,
    /// Concurrent sweep members (0: one per available core).
    pub jobs: usize,
    /// Cavity only: repeat the rotation-free DNS at `2n` to check the wall-averaged Nusselt number.
    pub refine_check: bool,
    /// Lipschitz constant of the omitted term, for the assumption diagnostics.
    pub q0: f64,
    /// Constant of the discrete trilinear bound, for the assumption diagnostics.
    pub c2: f64,
}

/// Partial configuration as read from a file or the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<Experiment>,
    pub n: Option<usize>,
    pub coarse_n: Option<usize>,
    pub dt: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub t_final: Option<f64>,
    pub nu: Option<f64>,
    pub omega: Option<f64>,
    pub chi: Option<f64>,
    pub chi_list: Option<Vec<f64>>,
    pub pr: Option<f64>,
    pub ra: Option<f64>,
    pub gamma: Option<f64>,
    pub boundary: Option<BoundarySpec>,
    pub output: Option<PathBuf>,
    pub steady_tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub solver_tol: Option<f64>,
    pub jobs: Option<usize>,
    pub refine_check: Option<bool>,
    pub q0: Option<f64>,
    pub c2: Option<f64>,
}

impl ConfigOverrides {
    pub fn from_json(text: &str) -> Result<ConfigOverrides> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn from_file(path: &Path) -> Result<ConfigOverrides> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigOverrides::from_json(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(self, other: ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            experiment, n, coarse_n, dt, dt_list, t_final, nu, omega, chi, chi_list, pr, ra, gamma, boundary, output,
            steady_tol, max_steps, solver_tol, jobs, refine_check, q0, c2
        )
    }
}

impl SimConfig {
    pub fn defaults(experiment: Experiment) -> SimConfig {
        let base = SimConfig {
            experiment,
            n: 16,
            coarse_n: 8,
            dt: 1.0 / 32.0,
            dt_list: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            t_final: 2.0,
            nu: 1.0,
            omega: 1.0,
            chi: 100.0,
            chi_list: vec![1e1, 1e2, 1e3, 1e4, 1e5],
            pr: 0.71,
            ra: 1e4,
            gamma: 0.0,
            boundary: BoundarySpec::Manufactured,
            output: PathBuf::from("out"),
            steady_tol: 1e-6,
            max_steps: 200_000,
            solver_tol: crate::linsolve::RESIDUAL_TOLERANCE,
            jobs: 0,
            refine_check: true,
            q0: 1.0,
            c2: 1.0,
        };
        match experiment {
            Experiment::Converge => SimConfig { n: 32, ..base },
            Experiment::ChiSweep | Experiment::DnsExport => base,
            Experiment::Decay => SimConfig { omega: 0.0, chi_list: vec![1e1, 1e2, 1e3], ..base },
            Experiment::Cavity => SimConfig {
                n: 32,
                dt: 1e-3,
                t_final: 200.0,
                omega: 5e6,
                chi_list: vec![1.0, 1e2, 1e4, 1e6],
                boundary: BoundarySpec::Cavity,
                ..base
            },
        }
    }

    /// Defaults for the experiment named by `overrides` (or `fallback`), then the overrides.
    pub fn resolve(overrides: ConfigOverrides, fallback: Option<Experiment>) -> Result<SimConfig> {
        let experiment = overrides
            .experiment
            .or(fallback)
            .ok_or_else(|| Error::Config("experiment: missing (no subcommand or `experiment` key)".into()))?;
        let d = SimConfig::defaults(experiment);
        let cfg = SimConfig {
            experiment,
            n: overrides.n.unwrap_or(d.n),
            coarse_n: overrides.coarse_n.unwrap_or(d.coarse_n),
            dt: overrides.dt.unwrap_or(d.dt),
            dt_list: overrides.dt_list.unwrap_or(d.dt_list),
            t_final: overrides.t_final.unwrap_or(d.t_final),
            nu: overrides.nu.unwrap_or(d.nu),
            omega: overrides.omega.unwrap_or(d.omega),
            chi: overrides.chi.unwrap_or(d.chi),
            chi_list: overrides.chi_list.unwrap_or(d.chi_list),
            pr: overrides.pr.unwrap_or(d.pr),
            ra: overrides.ra.unwrap_or(d.ra),
            gamma: overrides.gamma.unwrap_or(d.gamma),
            boundary: overrides.boundary.unwrap_or(d.boundary),
            output: overrides.output.unwrap_or(d.output),
            steady_tol: overrides.steady_tol.unwrap_or(d.steady_tol),
            max_steps: overrides.max_steps.unwrap_or(d.max_steps),
            solver_tol: overrides.solver_tol.unwrap_or(d.solver_tol),
            jobs: overrides.jobs.unwrap_or(d.jobs),
            refine_check: overrides.refine_check.unwrap_or(d.refine_check),
            q0: overrides.q0.unwrap_or(d.q0),
            c2: overrides.c2.unwrap_or(d.c2),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<SimConfig> {
        SimConfig::resolve(ConfigOverrides::from_json(text)?, None)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{key}: must be positive, got {v}")))
            }
        }
        fn nonnegative(key: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{key}: must be nonnegative, got {v}")))
            }
        }
        if self.n == 0 {
            return Err(Error::Config("n: must be positive".into()));
        }
        if self.coarse_n == 0 || self.coarse_n > self.n {
            return Err(Error::Config(format!("coarse_n: must lie in 1..={} (n), got {}", self.n, self.coarse_n)));
        }
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("nu", self.nu)?;
        nonnegative("omega", self.omega)?;
        nonnegative("chi", self.chi)?;
        positive("pr", self.pr)?;
        nonnegative("ra", self.ra)?;
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma: must be finite".into()));
        }
        positive("steady_tol", self.steady_tol)?;
        positive("solver_tol", self.solver_tol)?;
        nonnegative("q0", self.q0)?;
        positive("c2", self.c2)?;
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps: must be positive".into()));
        }
        if self.dt_list.is_empty() {
            return Err(Error::Config("dt_list: must not be empty".into()));
        }
        for (i, &dt) in self.dt_list.iter().enumerate() {
            positive(&format!("dt_list[{i}]"), dt)?;
        }
        if self.chi_list.is_empty() {
            return Err(Error::Config("chi_list: must not be empty".into()));
        }
        for (i, &chi) in self.chi_list.iter().enumerate() {
            nonnegative(&format!("chi_list[{i}]"), chi)?;
        }
        if self.experiment == Experiment::Cavity && self.boundary != BoundarySpec::Cavity {
            return Err(Error::Config("boundary: the cavity experiment needs `cavity`".into()));
        }
        if matches!(self.experiment, Experiment::Converge | Experiment::ChiSweep | Experiment::Decay)
            && self.boundary != BoundarySpec::Manufactured
        {
            return Err(Error::Config(format!("boundary: `{}` runs the manufactured flow", self.experiment.name())));
        }
        Ok(())
    }

    /// Rayon pool size for sweeps.
    pub fn worker_count(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_is_fully_defaulted() {
        let cfg = SimConfig::from_json(r#"{"experiment":"converge"}"#).unwrap();
        assert_eq!(cfg, SimConfig::defaults(Experiment::Converge));
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.chi, 100.0);
    }

    #[test]
    fn negative_dt_names_the_key() {
        let err = SimConfig::from_json(r#"{"experiment":"decay","dt":-0.1}"#).unwrap_err().to_string();
        assert!(err.contains("dt"), "{err}");
        let err = SimConfig::from_json(r#"{"experiment":"converge","dt_list":[1, 0]}"#).unwrap_err().to_string();
        assert!(err.contains("dt_list[1]"), "{err}");
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        let err = SimConfig::from_json(r#"{"experiment":"converge","dtt":0.1}"#).unwrap_err().to_string();
        assert!(err.contains("dtt"), "{err}");
        let err = SimConfig::from_json(r#"{"experiment":"converge","chi_list":[1,"x"]}"#).unwrap_err().to_string();
        assert!(err.contains("chi_list[1]"), "{err}");
        assert!(SimConfig::from_json(r#"{"experiment":"bogus"}"#).is_err());
    }

    #[test]
    fn later_overrides_win() {
        let file = ConfigOverrides::from_json(r#"{"experiment":"chi-sweep","n":8,"chi":5}"#).unwrap();
        let flags = ConfigOverrides { n: Some(4), coarse_n: Some(2), ..Default::default() };
        let cfg = SimConfig::resolve(file.merge(flags), None).unwrap();
        assert_eq!(cfg.n, 4);
        assert_eq!(cfg.coarse_n, 2);
        assert_eq!(cfg.chi, 5.0);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = SimConfig::defaults(Experiment::Cavity);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SimConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(Experiment::parse("chi-sweep").unwrap(), Experiment::ChiSweep);
    }

    proptest::proptest! {
        #[test]
        fn overrides_survive_json_and_flags_win(n in 2usize..64, dt in 1e-4f64..1.0, chi in 0.0f64..1e6, flag_n in proptest::option::of(2usize..64)) {
            let file = ConfigOverrides { n: Some(n), dt: Some(dt), chi: Some(chi), ..Default::default() };
            let text = serde_json::to_string(&file).unwrap();
            let back = ConfigOverrides::from_json(&text).unwrap();
            proptest::prop_assert_eq!(back.n, Some(n));
            proptest::prop_assert_eq!(back.dt, Some(dt));
            let merged = back.merge(ConfigOverrides { n: flag_n, ..Default::default() });
            proptest::prop_assert_eq!(merged.n, Some(flag_n.unwrap_or(n)));
            proptest::prop_assert_eq!(merged.chi, Some(chi));
        }
    }
}

