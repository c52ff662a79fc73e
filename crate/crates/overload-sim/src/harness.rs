//! Scenario runner: calibrates server capacity, sweeps load factors across
//! schemes with common random numbers, and emits the per-run and aggregate
//! artifact files.

use crate::client::TimeoutModel;
use crate::kernel::{self, RunResult, Scheme, SimError};
use crate::report::{self, ReportError, RunKey, RunRow};
use crate::scenario::{ConfigError, Scenario, ScenarioKind};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workload model: {0}")]
    Model(#[from] crate::workload::ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("calibration did not converge: {0}")]
    NoConvergence(String),
}

/// Calibration output: the capacity that defines `rho = 1` plus the probe
/// history for diagnostics.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Requests per second the server sustains with a completion ratio of at
    /// least the configured threshold.
    pub capacity: f64,
    /// Work-conserving ceiling `1 / E[busy time per request]`.
    pub ceiling: f64,
    /// `(request_rate, completion_ratio)` pairs probed by the search.
    pub probes: Vec<(f64, f64)>,
}

/// Relative rate resolution at which the bisection stops.
const CALIBRATION_RESOLUTION: f64 = 0.002;

/// Finds the highest request rate the scenario's server sustains under FIFO
/// with timeouts disabled: the largest rate whose pre-horizon completion
/// ratio stays at or above the configured threshold. Deterministic for a
/// fixed calibration seed; this rate defines `rho = 1`.
pub fn calibrate_capacity(scenario: &Scenario) -> Result<Calibration, HarnessError> {
    let model = scenario.model()?;
    let visits = model.expected_visits()?;
    let mean_len: f64 = visits.iter().sum();
    // Mean CPU demand per request over the stationary type mix.
    let mean_busy: f64 = model
        .types
        .iter()
        .zip(&visits)
        .map(|(t, v)| v / mean_len * t.mean_exec() * scenario.demand.busy_fraction)
        .sum();
    if !(mean_busy > 0.0) {
        return Err(HarnessError::NoConvergence(
            "workload has no CPU demand".to_string(),
        ));
    }
    let ceiling = 1.0 / mean_busy;
    let fifo_scheme = match scenario.kind {
        ScenarioKind::E1SingleQueue => Scheme::AlwaysFifo,
        ScenarioKind::E2Ecommerce => Scheme::Sq,
    };
    let threshold = scenario.calibration.completion_ratio;
    let mut probes = Vec::new();
    let mut ratio_at = |rate: f64| -> Result<f64, HarnessError> {
        let mut cfg = scenario.run_config(
            fifo_scheme,
            1.0,
            scenario.calibration.seed,
            TimeoutModel::infinite(),
            rate,
            false,
        )?;
        cfg.horizon = scenario.calibration.horizon;
        let result = kernel::run(cfg)?;
        let ratio = result.horizon_completion_ratio();
        probes.push((rate, ratio));
        Ok(ratio)
    };

    let mut hi = ceiling * 1.05;
    let mut lo = 0.0;
    if ratio_at(hi)? >= threshold {
        // Even 5% above the work-conserving ceiling keeps up; the horizon is
        // too short to expose saturation.
        return Err(HarnessError::NoConvergence(format!(
            "rate {hi:.3} req/s above the analytic ceiling {ceiling:.3} still \
             meets the completion threshold"
        )));
    }
    while (hi - lo) > CALIBRATION_RESOLUTION * ceiling {
        let mid = 0.5 * (hi + lo);
        if ratio_at(mid)? >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(HarnessError::NoConvergence(
            "no positive rate met the completion threshold".to_string(),
        ));
    }
    Ok(Calibration {
        capacity: lo,
        ceiling,
        probes,
    })
}

/// Optional narrowing of a sweep from the command line.
#[derive(Debug, Clone, Default)]
pub struct SweepOverrides {
    pub seeds: Option<Vec<u64>>,
    pub rho: Option<Vec<f64>>,
    pub scheme: Option<Scheme>,
}

/// In-memory results of a full sweep.
pub struct SweepResults {
    pub scenario: Scenario,
    pub capacity: f64,
    pub runs: Vec<(RunKey, RunResult)>,
}

impl SweepResults {
    pub fn get(&self, scheme: Scheme, rho: f64, timeout: Option<f64>, seed: u64) -> &RunResult {
        self.runs
            .iter()
            .find(|(k, _)| {
                k.scheme == scheme && k.rho == rho && k.timeout == timeout && k.seed == seed
            })
            .map(|(_, r)| r)
            .unwrap_or_else(|| panic!("no run for {scheme} rho={rho} to={timeout:?} seed={seed}"))
    }

    pub fn cell(&self, scheme: Scheme, rho: f64, timeout: Option<f64>) -> Vec<&RunResult> {
        self.runs
            .iter()
            .filter(|(k, _)| k.scheme == scheme && k.rho == rho && k.timeout == timeout)
            .map(|(_, r)| r)
            .collect()
    }
}

/// Runs every `(scheme, rho, timeout-cell, seed)` combination. Schemes at
/// equal `(rho, seed)` share the arrival, trace, demand, and timeout streams;
/// only scheduling differs.
pub fn run_sweep(
    scenario: &Scenario,
    overrides: &SweepOverrides,
    record_detail: bool,
) -> Result<SweepResults, HarnessError> {
    scenario.validate()?;
    let calibration = calibrate_capacity(scenario)?;
    let seeds = overrides.seeds.clone().unwrap_or_else(|| scenario.seeds.clone());
    let rhos = overrides.rho.clone().unwrap_or_else(|| scenario.rho.clone());
    let schemes: Vec<Scheme> = match overrides.scheme {
        Some(s) => vec![s],
        None => scenario.schemes.clone(),
    };
    let mut runs = Vec::new();
    for &scheme in &schemes {
        if !scenario.kind.allowed_schemes().contains(&scheme) {
            return Err(ConfigError::Invalid(format!(
                "scheme {scheme} does not apply to this scenario kind"
            ))
            .into());
        }
        for &rho in &rhos {
            for (timeout_tag, timeout_model) in scenario.timeout_cells() {
                for &seed in &seeds {
                    let cfg = scenario.run_config(
                        scheme,
                        rho,
                        seed,
                        timeout_model,
                        calibration.capacity,
                        record_detail,
                    )?;
                    let result = kernel::run(cfg)?;
                    runs.push((
                        RunKey {
                            scheme,
                            rho,
                            timeout: timeout_tag,
                            seed,
                        },
                        result,
                    ));
                }
            }
        }
    }
    Ok(SweepResults {
        scenario: scenario.clone(),
        capacity: calibration.capacity,
        runs,
    })
}

/// Runs a scenario file and writes every artifact into `out_dir`:
/// per-run ledgers, CCDFs, utilization and switch traces, the run manifest,
/// and the aggregate tables and figures.
pub fn run_scenario(
    scenario_path: &Path,
    out_dir: &Path,
    overrides: &SweepOverrides,
) -> Result<Vec<RunRow>, HarnessError> {
    let scenario = Scenario::load(scenario_path)?;
    let name = scenario_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".to_string());
    let results = run_sweep(&scenario, overrides, false)?;
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for (key, result) in &results.runs {
        rows.push(report::emit_run(
            out_dir,
            &name,
            scenario.kind,
            *key,
            results.capacity,
            result,
        )?);
    }
    report::write_manifest(out_dir, &rows)?;
    report::regenerate(out_dir)?;
    Ok(rows)
}

/// Rebuilds the aggregate tables and figures from a previously written
/// output directory.
pub fn report_dir(dir: &Path) -> Result<(), HarnessError> {
    report::regenerate(dir)?;
    Ok(())
}
