//! Scenario files: the on-disk description of one experiment.
//!
//! A scenario pins the workload model (states, transition rows, execution
//! times, utility scales), the server (queue capacities, worker count,
//! thresholds), the client (timeouts, retries, pool), the demand profile, and
//! the sweep axes (schemes, load factors, seeds). The format is TOML and
//! round-trips losslessly; see `scenarios/` for the two bundled files.

use crate::client::{RetryPolicy, ThinkDistribution, TimeoutModel};
use crate::kernel::{RunConfig, Scheme, ServerParams};
use crate::server::PhaseProfile;
use crate::workload::{ModelError, RequestType, SessionModel, UtilityTable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("workload model: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "e1-single-queue")]
    E1SingleQueue,
    #[serde(rename = "e2-ecommerce")]
    E2Ecommerce,
}

impl ScenarioKind {
    pub fn allowed_schemes(&self) -> &'static [Scheme] {
        match self {
            ScenarioKind::E1SingleQueue => &[
                Scheme::AlwaysFifo,
                Scheme::AlwaysLifo,
                Scheme::LifoAtOverload,
            ],
            ScenarioKind::E2Ecommerce => &[Scheme::Sq, Scheme::EightQAf, Scheme::EightQLifoPri],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    /// Seconds of hard timeout before the think component.
    pub base_timeout: f64,
    pub think_timeout_mean: f64,
    pub think_distribution: ThinkDistribution,
    pub retry_probability: f64,
    pub max_retries: u32,
    pub trace_pool_size: usize,
    #[serde(default = "default_true")]
    pub cycle_pool: bool,
    #[serde(default)]
    pub think_time: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Simulated seconds per calibration probe.
    pub horizon: f64,
    /// A rate "keeps up" when this share of pre-horizon attempts completes
    /// before the horizon.
    pub completion_ratio: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            horizon: 20_000.0,
            completion_ratio: 0.999,
            seed: 0x0ca1_1b8a,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub start: String,
    pub browsing_scale: f64,
    pub transaction_scale: f64,
    pub states: Vec<RequestType>,
    /// Full transition rows, `state -> (state-or-"Exit" -> probability)`.
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub schemes: Vec<Scheme>,
    pub rho: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Simulated seconds of arrivals per run (the drain extends past it).
    pub horizon: f64,
    /// Flat deadlines swept as separate cells; single-queue scenarios only.
    #[serde(default)]
    pub fixed_timeouts: Vec<f64>,
    pub server: ServerParams,
    pub client: ClientConfig,
    pub demand: PhaseProfile,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    pub workload: WorkloadConfig,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ConfigError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.schemes.is_empty() {
            return invalid("schemes list is empty".into());
        }
        if self.rho.is_empty() {
            return invalid("rho list is empty".into());
        }
        if self.rho.iter().any(|&r| !(r > 0.0)) {
            return invalid(format!("every rho must be positive: {:?}", self.rho));
        }
        if self.seeds.is_empty() {
            return invalid("seeds list is empty".into());
        }
        if !(self.horizon > 0.0) {
            return invalid(format!("horizon must be positive, got {}", self.horizon));
        }
        for scheme in &self.schemes {
            if !self.kind.allowed_schemes().contains(scheme) {
                return invalid(format!(
                    "scheme {scheme} does not apply to this scenario kind"
                ));
            }
        }
        match self.kind {
            ScenarioKind::E1SingleQueue => {
                if self.fixed_timeouts.is_empty() {
                    return invalid("single-queue scenarios need fixed_timeouts".into());
                }
                if self.fixed_timeouts.iter().any(|&t| !(t > 0.0)) {
                    return invalid("fixed timeouts must be positive".into());
                }
            }
            ScenarioKind::E2Ecommerce => {
                if !self.fixed_timeouts.is_empty() {
                    return invalid(
                        "fixed_timeouts only applies to single-queue scenarios".into(),
                    );
                }
            }
        }
        if !(self.server.lower_threshold > 0.0
            && self.server.lower_threshold < self.server.upper_threshold
            && self.server.upper_threshold <= 1.0)
        {
            return invalid(format!(
                "thresholds must satisfy 0 < lower < upper <= 1, got {} / {}",
                self.server.lower_threshold, self.server.upper_threshold
            ));
        }
        if self.server.workers == 0 {
            return invalid("worker count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.client.retry_probability) {
            return invalid(format!(
                "retry probability must be in [0,1], got {}",
                self.client.retry_probability
            ));
        }
        if self.client.trace_pool_size == 0 {
            return invalid("trace pool size must be at least 1".into());
        }
        self.demand
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("demand profile: {e}")))?;
        let model = self.model()?;
        model.validate()?;
        // Per-type schemes need a sound utility ordering.
        if self.schemes.iter().any(Scheme::uses_per_type_queues) {
            self.utilities(&model)?;
        }
        Ok(())
    }

    /// Builds the session model from the workload block.
    pub fn model(&self) -> Result<SessionModel, ConfigError> {
        let w = &self.workload;
        if w.states.is_empty() {
            return Err(ModelError::Empty.into());
        }
        let index_of = |label: &str| w.states.iter().position(|s| s.label == label);
        let n = w.states.len();
        let start = index_of(&w.start).ok_or_else(|| {
            ConfigError::Invalid(format!("start state {} is not in states", w.start))
        })?;
        // An explicit Exit row is allowed but must be absorbing.
        if let Some(row) = w.transitions.get("Exit") {
            let self_loop = row.get("Exit").copied().unwrap_or(0.0);
            let leak: f64 = row.iter().filter(|(k, _)| *k != "Exit").map(|(_, p)| p).sum();
            if (self_loop - 1.0).abs() > ROW_SUM_TOLERANCE || leak.abs() > ROW_SUM_TOLERANCE {
                return Err(ModelError::ExitNotAbsorbing.into());
            }
        }
        let mut transitions = vec![vec![0.0; n + 1]; n];
        for (i, state) in w.states.iter().enumerate() {
            let row = w.transitions.get(&state.label).ok_or_else(|| {
                ConfigError::Invalid(format!("missing transition row for {}", state.label))
            })?;
            for (target, &p) in row {
                if target == "Exit" {
                    transitions[i][n] = p;
                } else {
                    let j = index_of(target).ok_or_else(|| {
                        ConfigError::Invalid(format!(
                            "transition {} -> {target} names an unknown state",
                            state.label
                        ))
                    })?;
                    transitions[i][j] = p;
                }
            }
        }
        Ok(SessionModel {
            types: w.states.clone(),
            transitions,
            start,
        })
    }

    pub fn utilities(&self, model: &SessionModel) -> Result<UtilityTable, ConfigError> {
        let q = model.reach_probabilities()?;
        UtilityTable::derive(
            model,
            &q,
            self.workload.browsing_scale,
            self.workload.transaction_scale,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Timeout cells for the sweep: flat deadlines for single-queue
    /// scenarios, the client timeout model otherwise.
    pub fn timeout_cells(&self) -> Vec<(Option<f64>, TimeoutModel)> {
        match self.kind {
            ScenarioKind::E1SingleQueue => self
                .fixed_timeouts
                .iter()
                .map(|&t| (Some(t), TimeoutModel::fixed(t)))
                .collect(),
            ScenarioKind::E2Ecommerce => vec![(
                None,
                TimeoutModel {
                    base_timeout: self.client.base_timeout,
                    think_timeout_mean: self.client.think_timeout_mean,
                    think_distribution: self.client.think_distribution,
                },
            )],
        }
    }

    /// Resolves one sweep cell into a runnable configuration.
    /// `capacity` is the calibrated service capacity in requests/second;
    /// `rho` scales it into an offered request rate.
    pub fn run_config(
        &self,
        scheme: Scheme,
        rho: f64,
        seed: u64,
        timeout: TimeoutModel,
        capacity: f64,
        record_detail: bool,
    ) -> Result<RunConfig, ConfigError> {
        let model = self.model()?;
        let utilities = if scheme.uses_per_type_queues() {
            self.utilities(&model)?
        } else {
            UtilityTable {
                utilities: vec![1.0; model.len()],
                browsing_scale: 1.0,
                transaction_scale: 1.0,
            }
        };
        let mean_len = model.mean_session_length()?;
        let session_rate = rho * capacity / mean_len;
        Ok(RunConfig {
            seed,
            scheme,
            session_rate,
            horizon: self.horizon,
            model,
            utilities,
            profile: self.demand,
            timeout,
            retry: RetryPolicy {
                retry_probability: self.client.retry_probability,
                max_retries: self.client.max_retries,
            },
            server: self.server,
            pool_size: self.client.trace_pool_size,
            cycle_pool: self.client.cycle_pool,
            think_time: self.client.think_time,
            record_detail,
        })
    }
}

/// The workload block for the default retail chain; used by the bundled
/// e-commerce scenario and available programmatically for tests and examples.
pub fn default_retail_workload() -> WorkloadConfig {
    let model = crate::workload::default_retail_model();
    model_to_workload(&model, 1000.0, 5000.0)
}

/// Serializes a model back into the config representation (lossless).
pub fn model_to_workload(
    model: &SessionModel,
    browsing_scale: f64,
    transaction_scale: f64,
) -> WorkloadConfig {
    let n = model.len();
    let mut transitions = BTreeMap::new();
    for (i, t) in model.types.iter().enumerate() {
        let mut row = BTreeMap::new();
        for j in 0..n {
            if model.transitions[i][j] != 0.0 {
                row.insert(model.types[j].label.clone(), model.transitions[i][j]);
            }
        }
        if model.transitions[i][n] != 0.0 {
            row.insert("Exit".to_string(), model.transitions[i][n]);
        }
        transitions.insert(t.label.clone(), row);
    }
    WorkloadConfig {
        start: model.types[model.start].label.clone(),
        browsing_scale,
        transaction_scale,
        states: model.types.clone(),
        transitions,
    }
}
