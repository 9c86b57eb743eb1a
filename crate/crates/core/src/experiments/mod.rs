//! Drivers for the reproducible studies: temporal convergence on a
//! manufactured flow, the model-error sweep over the nudging strength, the
//! transient decay of the initial error, and the differentially heated cavity.
//!
//! Every driver writes its artifacts under the configured output directory
//! and returns a [`RunSummary`] holding the effective configuration, scalar
//! results and pass/fail checks.

mod cavity;
mod convergence;
mod decay;
mod postprocess;
mod sweep;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, SimConfig};
use crate::mesh::fmt_f64;
use crate::{Error, Result};

pub use cavity::{run_double_pane, CavityCase, CavityReport};
pub use convergence::{run_convergence, ConvergenceReport};
pub use decay::{run_decay, DecayReport, DecaySeries};
pub use postprocess::{compute_nusselt, compute_vorticity_stream, wall_average, NusseltProfile, WallSide};
pub use sweep::{run_chi_sweep, run_dns_export, ChiSweepReport};

/// Rows of `(parameter, error, rate)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateTable {
    pub parameter: Vec<f64>,
    pub error: Vec<f64>,
    /// `log(e_{i-1} / e_i) / log(p_{i-1} / p_i)`; `None` on the first row.
    pub rate: Vec<Option<f64>>,
}

impl RateTable {
    pub fn new(parameter: Vec<f64>, error: Vec<f64>) -> Result<RateTable> {
        if parameter.len() != error.len() {
            return Err(Error::DimensionMismatch { expected: parameter.len(), found: error.len() });
        }
        let rate = (0..parameter.len())
            .map(|i| (i > 0).then(|| (error[i - 1] / error[i]).ln() / (parameter[i - 1] / parameter[i]).ln()))
            .collect();
        Ok(RateTable { parameter, error, rate })
    }

    pub fn len(&self) -> usize {
        self.parameter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameter.is_empty()
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.error.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_csv(&self, parameter_name: &str) -> String {
        let mut out = format!("{parameter_name},error,rate\n");
        for i in 0..self.len() {
            let rate = self.rate[i].map(fmt_f64).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", fmt_f64(self.parameter[i]), fmt_f64(self.error[i]), rate);
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).map(|(slope, _)| slope)
}

/// `(slope, intercept)` of the least-squares line; `None` for fewer than two
/// distinct abscissae or non-finite data.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Decay rate `r` of `y ~ exp(-r t)` fitted on the samples with `y > floor`.
pub fn exponential_rate(t: &[f64], y: &[f64], floor: f64) -> Option<f64> {
    let (ts, ls): (Vec<f64>, Vec<f64>) =
        t.iter().zip(y).filter(|(_, &v)| v > floor && v.is_finite()).map(|(&a, &v)| (a, v.ln())).unzip();
    linear_fit(&ts, &ls).map(|(slope, _)| -slope)
}

/// One acceptance check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub config: SimConfig,
    pub scalars: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn new(config: &SimConfig) -> RunSummary {
        RunSummary {
            experiment: config.experiment,
            config: config.clone(),
            scalars: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
            files: Vec::new(),
        }
    }

    pub fn scalar(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.scalars.insert(key.to_string(), value);
    }

    pub fn check(&mut self, check: Check) {
        if check.passed {
            log::info!("check {}: pass ({})", check.name, check.detail);
        } else {
            log::warn!("check {}: FAIL ({})", check.name, check.detail);
        }
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn write_file(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = write_output(&self.config.output, name, contents)?;
        self.files.push(path);
        Ok(())
    }

    pub fn write(&self) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self)?;
        write_output(&self.config.output, "summary.json", &text)
    }
}

pub(crate) fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Number of steps of size `dt` covering `[0, t_final]`; rejects non-integral ratios.
pub(crate) fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::Config(format!("dt = {dt} does not divide t_final = {t_final}")));
    }
    Ok(steps as usize)
}

/// Maps `f` over `items` on a pool of `jobs` threads, keeping input order.
pub(crate) fn parallel_map<T, R>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Runs the experiment named in `config`, writes its artifacts and `summary.json`.
pub fn run_experiment(config: &SimConfig) -> Result<RunSummary> {
    config.validate()?;
    // sequential kernels: results must not depend on the thread count
    faer::set_global_parallelism(faer::Par::Seq);
    let summary = match config.experiment {
        Experiment::Converge => run_convergence(config)?.summary,
        Experiment::ChiSweep => run_chi_sweep(config)?.summary,
        Experiment::Decay => run_decay(config)?.summary,
        Experiment::Cavity => run_double_pane(config)?.summary,
        Experiment::DnsExport => run_dns_export(config)?,
    };
    summary.write()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_recompute_from_errors() {
        let t = RateTable::new(vec![1.0, 0.5, 0.25], vec![4.0, 1.0, 0.25]).unwrap();
        assert_eq!(t.rate[0], None);
        assert!((t.rate[1].unwrap() - 2.0).abs() < 1e-14);
        assert!((t.rate[2].unwrap() - 2.0).abs() < 1e-14);
        assert!(t.is_strictly_decreasing());
        let csv = t.to_csv("dt");
        assert!(csv.starts_with("dt,error,rate\n1.0,4.0,\n"));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn exponential_fit_ignores_floor() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|s| (2.0 * (-3.0 * s).exp()).max(1e-3)).collect();
        let r = exponential_rate(&t, &y, 1e-2).unwrap();
        assert!((r - 3.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn step_count_requires_divisibility() {
        assert_eq!(step_count(2.0, 0.125).unwrap(), 16);
        assert!(step_count(2.0, 0.3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn power_laws_give_their_exponent(c in 1e-6f64..1e3, p in 0.5f64..4.0, k in 2usize..7) {
            let h: Vec<f64> = (0..k).map(|i| 0.5f64.powi(i as i32)).collect();
            let e: Vec<f64> = h.iter().map(|x| c * x.powf(p)).collect();
            let t = RateTable::new(h.clone(), e.clone()).unwrap();
            proptest::prop_assert!(t.is_strictly_decreasing());
            for r in t.rate.iter().skip(1) {
                proptest::prop_assert!((r.unwrap() - p).abs() < 1e-9);
            }
            proptest::prop_assert!((loglog_slope(&h, &e).unwrap() - p).abs() < 1e-9);
        }
    }
}

