//! Service demands: what a request costs once a worker picks it up.
//!
//! A demand is a list of alternating busy and waiting phases. Busy phases
//! consume CPU (and contend with every other busy phase under processor
//! sharing); waiting phases model back-end calls and elapse in real time
//! regardless of CPU load.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Phases shorter than this are dropped at sampling time; exponential draws
/// can come out arbitrarily close to zero.
const MIN_PHASE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Busy,
    Wait,
}

/// Sampled work for one request: ordered `(kind, nominal_duration)` phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceDemand {
    pub phases: Vec<(PhaseKind, f64)>,
}

impl ServiceDemand {
    pub fn total(&self) -> f64 {
        self.phases.iter().map(|(_, d)| d).sum()
    }

    pub fn busy_total(&self) -> f64 {
        self.phases
            .iter()
            .filter(|(k, _)| *k == PhaseKind::Busy)
            .map(|(_, d)| d)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseDistribution {
    /// Every phase takes exactly its nominal mean.
    Deterministic,
    /// Phase durations are exponential with the nominal mean.
    Exponential,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("phase count must be at least 1")]
    NoPhases,
    #[error("busy fraction must be in (0, 1], got {0}")]
    BadBusyFraction(f64),
}

/// How a request type's mean execution time is split into phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    /// Total number of phases; they alternate starting with a busy phase.
    pub phases: usize,
    /// Fraction of the mean execution time spent on the CPU.
    pub busy_fraction: f64,
    pub distribution: PhaseDistribution,
}

impl PhaseProfile {
    /// Interleaved busy/wait phases with exponential durations, half the
    /// execution time on the CPU.
    pub fn default_ecommerce() -> Self {
        PhaseProfile {
            phases: 4,
            busy_fraction: 0.5,
            distribution: PhaseDistribution::Exponential,
        }
    }

    /// Single CPU-bound phase of fixed length.
    pub fn cpu_intensive() -> Self {
        PhaseProfile {
            phases: 1,
            busy_fraction: 1.0,
            distribution: PhaseDistribution::Deterministic,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.phases == 0 {
            return Err(ProfileError::NoPhases);
        }
        if !(self.busy_fraction > 0.0 && self.busy_fraction <= 1.0) {
            return Err(ProfileError::BadBusyFraction(self.busy_fraction));
        }
        Ok(())
    }

    /// Samples a demand whose expected total duration is `mean_exec` seconds.
    pub fn sample(&self, mean_exec: f64, rng: &mut impl Rng) -> ServiceDemand {
        let busy_slots = self.phases.div_ceil(2);
        let wait_slots = self.phases / 2;
        let busy_mean = mean_exec * self.busy_fraction / busy_slots as f64;
        let wait_mean = if wait_slots == 0 {
            0.0
        } else {
            mean_exec * (1.0 - self.busy_fraction) / wait_slots as f64
        };
        let mut phases = Vec::with_capacity(self.phases);
        for i in 0..self.phases {
            let (kind, mean) = if i % 2 == 0 {
                (PhaseKind::Busy, busy_mean)
            } else {
                (PhaseKind::Wait, wait_mean)
            };
            if mean <= 0.0 {
                continue;
            }
            let duration = match self.distribution {
                PhaseDistribution::Deterministic => mean,
                PhaseDistribution::Exponential => {
                    let u: f64 = rng.random();
                    -mean * (1.0 - u).ln()
                }
            };
            if duration >= MIN_PHASE {
                phases.push((kind, duration));
            }
        }
        if phases.is_empty() {
            // All draws collapsed; keep the request nonempty.
            phases.push((PhaseKind::Busy, MIN_PHASE));
        }
        ServiceDemand { phases }
    }
}
