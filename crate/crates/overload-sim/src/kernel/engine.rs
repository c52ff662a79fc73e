//! The simulation engine: owns all state, dispatches events in
//! `(time, sequence)` order, and drains in-flight work after the horizon so
//! the outcome ledger balances exactly.
//!
//! Between events the processor-shared CPU is advanced analytically, so phase
//! completions land at exact instants rather than on a fixed time step. Phase
//! boundary events carry the CPU generation they were computed for; any
//! change to the in-service set invalidates older boundaries, which are then
//! ignored when they surface.

use crate::client::{
    on_timeout, ArrivalProcess, RequestOutcome, RetryPolicy, SessionAction, SessionInstance,
    SessionStatus, TimeoutAction, TimeoutModel,
};
use crate::kernel::calendar::{Calendar, CalendarError};
use crate::kernel::rng::{RngStreams, Stream};
use crate::metrics::{AttemptOutcome, OutcomeLedger};
use crate::server::{
    ControllerMode, Cpu, Discipline, DisciplineController, EnqueueOutcome, PhaseProfile, QueueBank,
    QueuedRequest, ServiceDemand, WorkerPool,
};
use crate::workload::{RequestClass, SessionModel, UtilityTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the service schemes under comparison. The first three drive the
/// single-queue experiments, the last three the e-commerce experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "Always-FIFO")]
    AlwaysFifo,
    #[serde(rename = "Always-LIFO")]
    AlwaysLifo,
    #[serde(rename = "LIFO-at-overload")]
    LifoAtOverload,
    #[serde(rename = "SQ")]
    Sq,
    #[serde(rename = "8Q-AF")]
    EightQAf,
    #[serde(rename = "8Q-LIFO-Pri")]
    EightQLifoPri,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::AlwaysFifo => "Always-FIFO",
            Scheme::AlwaysLifo => "Always-LIFO",
            Scheme::LifoAtOverload => "LIFO-at-overload",
            Scheme::Sq => "SQ",
            Scheme::EightQAf => "8Q-AF",
            Scheme::EightQLifoPri => "8Q-LIFO-Pri",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "Always-FIFO" => Some(Scheme::AlwaysFifo),
            "Always-LIFO" => Some(Scheme::AlwaysLifo),
            "LIFO-at-overload" => Some(Scheme::LifoAtOverload),
            "SQ" => Some(Scheme::Sq),
            "8Q-AF" => Some(Scheme::EightQAf),
            "8Q-LIFO-Pri" => Some(Scheme::EightQLifoPri),
        _ => None,
        }
    }

    pub fn uses_per_type_queues(&self) -> bool {
        matches!(self, Scheme::EightQAf | Scheme::EightQLifoPri)
    }

    pub fn controller_mode(&self) -> ControllerMode {
        match self {
            Scheme::AlwaysFifo | Scheme::Sq | Scheme::EightQAf => ControllerMode::ForcedFifo,
            Scheme::AlwaysLifo => ControllerMode::ForcedLifo,
            Scheme::LifoAtOverload | Scheme::EightQLifoPri => ControllerMode::Hysteresis,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerParams {
    pub workers: usize,
    /// Trailing utilization window, seconds.
    pub utilization_window: f64,
    pub upper_threshold: f64,
    pub lower_threshold: f64,
    /// Capacity of the single shared queue (single-queue schemes).
    pub single_queue_capacity: usize,
    pub browsing_capacity: usize,
    pub transaction_capacity: usize,
}

impl ServerParams {
    pub fn default_testbed() -> Self {
        ServerParams {
            workers: 30,
            utilization_window: 1.0,
            upper_threshold: 0.99,
            lower_threshold: 0.95,
            single_queue_capacity: 100,
            browsing_capacity: 50,
            transaction_capacity: 25,
        }
    }
}

/// Everything one run needs; fully resolved, no file access.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub scheme: Scheme,
    /// Session arrival rate, sessions per second.
    pub session_rate: f64,
    /// Arrivals stop here; in-flight sessions drain to completion.
    pub horizon: f64,
    pub model: SessionModel,
    pub utilities: UtilityTable,
    pub profile: PhaseProfile,
    pub timeout: TimeoutModel,
    pub retry: RetryPolicy,
    pub server: ServerParams,
    pub pool_size: usize,
    /// Cycle through a pregenerated trace pool (default) or sample a fresh
    /// trace per session.
    pub cycle_pool: bool,
    /// Client think time between consecutive requests of a session.
    pub think_time: f64,
    /// Record per-dispatch decisions and a per-attempt log (heavier).
    pub record_detail: bool,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("calendar error: {0}")]
    Calendar(#[from] CalendarError),
    #[error("outcome conservation violated at end of run")]
    ConservationViolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchRecord {
    pub time: f64,
    pub from: Discipline,
    pub to: Discipline,
    pub utilization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilSample {
    pub time: f64,
    pub utilization: f64,
    pub policy: Discipline,
}

/// One scheduling decision, enough to replay the argmax offline.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub time: f64,
    /// Pending counts per queue, in bank order, before the dequeue.
    pub pending: Vec<usize>,
    pub queue: usize,
    pub from_tail: bool,
    pub policy: Discipline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueMeta {
    pub label: String,
    pub class: RequestClass,
    pub utility: f64,
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptRecord {
    pub session: u64,
    pub position: usize,
    pub attempt: u32,
    pub type_index: usize,
    pub issue_time: f64,
    pub deadline: f64,
    pub resolution_time: f64,
    pub kind: AttemptResolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptResolution {
    Completed,
    TimedOut,
    Dropped,
}

#[derive(Debug)]
pub struct RunResult {
    pub ledger: OutcomeLedger,
    pub util_trace: Vec<UtilSample>,
    pub switch_log: Vec<SwitchRecord>,
    pub decision_log: Vec<DecisionRecord>,
    pub attempt_log: Vec<AttemptRecord>,
    pub queue_meta: Vec<QueueMeta>,
    pub horizon: f64,
    /// Attempts issued no later than the horizon.
    pub issued_within_horizon: u64,
    /// Attempts completed in time no later than the horizon.
    pub completed_within_horizon: u64,
    /// Instant of the last event (end of drain).
    pub end_time: f64,
}

impl RunResult {
    /// Completion ratio over the pre-horizon portion of the run: how well the
    /// server kept up while arrivals were flowing.
    pub fn horizon_completion_ratio(&self) -> f64 {
        if self.issued_within_horizon == 0 {
            1.0
        } else {
            self.completed_within_horizon as f64 / self.issued_within_horizon as f64
        }
    }

    /// Share of arrived sessions that completed.
    pub fn session_completion_share(&self) -> f64 {
        let s = &self.ledger.sessions;
        if s.arrived == 0 {
            1.0
        } else {
            s.completed as f64 / s.arrived as f64
        }
    }
}

enum Ev {
    SessionArrival,
    Issue { session: usize },
    Timeout { attempt: usize },
    PhaseBoundary { generation: u64 },
    UtilTick,
}

struct Attempt {
    session: usize,
    position: usize,
    attempt_no: u32,
    type_index: usize,
    issue_time: f64,
    deadline: f64,
    demand: Option<ServiceDemand>,
    resolved: bool,
}

struct Engine {
    cfg: RunConfig,
    cal: Calendar<Ev>,
    streams: RngStreams,
    arrival_rng: rand_chacha::ChaCha8Rng,
    arrival_proc: ArrivalProcess,
    pool: Vec<Vec<usize>>,
    next_trace: usize,
    sessions: Vec<SessionInstance>,
    session_traces: Vec<Vec<usize>>,
    attempts: Vec<Attempt>,
    bank: QueueBank,
    controller: DisciplineController,
    cpu: Cpu,
    workers: WorkerPool,
    ledger: OutcomeLedger,
    util_trace: Vec<UtilSample>,
    switch_log: Vec<SwitchRecord>,
    decision_log: Vec<DecisionRecord>,
    attempt_log: Vec<AttemptRecord>,
    issued_within_horizon: u64,
    completed_within_horizon: u64,
    boundary_pending: bool,
    last_boundary_gen: u64,
}

/// Runs one configuration to completion: arrivals on `[0, horizon)`, then a
/// drain until every session has completed or aborted. Deterministic per
/// seed.
pub fn run(cfg: RunConfig) -> Result<RunResult, SimError> {
    validate(&cfg)?;
    let mut engine = Engine::new(cfg)?;
    engine.run_loop()?;
    engine.finish()
}

fn validate(cfg: &RunConfig) -> Result<(), SimError> {
    let bad = |msg: String| Err(SimError::ConfigInvalid(msg));
    if let Err(e) = cfg.model.validate() {
        return bad(format!("workload model: {e}"));
    }
    if let Err(e) = cfg.profile.validate() {
        return bad(format!("phase profile: {e}"));
    }
    if !(cfg.horizon > 0.0) {
        return bad(format!("horizon must be positive, got {}", cfg.horizon));
    }
    if cfg.session_rate < 0.0 || !cfg.session_rate.is_finite() {
        return bad(format!("session rate must be finite and >= 0, got {}", cfg.session_rate));
    }
    if cfg.pool_size == 0 {
        return bad("trace pool size must be at least 1".to_string());
    }
    if cfg.server.workers == 0 {
        return bad("worker pool must have at least one worker".to_string());
    }
    Ok(())
}

impl Engine {
    fn new(cfg: RunConfig) -> Result<Self, SimError> {
        let streams = RngStreams::new(cfg.seed);
        // The pool is drawn from the trace stream up front, identically for
        // every scheme sharing the seed.
        let mut trace_rng = streams.sequential(Stream::Traces);
        let pool: Vec<Vec<usize>> = (0..cfg.pool_size)
            .map(|id| cfg.model.sample_trace(id as u64, &mut trace_rng).requests)
            .collect();
        let bank = if cfg.scheme.uses_per_type_queues() {
            QueueBank::per_type(
                &cfg.model,
                &cfg.utilities,
                cfg.server.browsing_capacity,
                cfg.server.transaction_capacity,
            )
        } else {
            QueueBank::single(&cfg.model, cfg.server.single_queue_capacity)
        };
        let controller = DisciplineController::new(
            cfg.scheme.controller_mode(),
            cfg.server.upper_threshold,
            cfg.server.lower_threshold,
        );
        let cpu = Cpu::new(cfg.server.utilization_window);
        let workers = WorkerPool::new(cfg.server.workers);
        let ledger = OutcomeLedger::new(cfg.model.types.clone());
        let arrival_rng = streams.sequential(Stream::Arrivals);
        let arrival_proc = ArrivalProcess::new(cfg.session_rate);
        Ok(Engine {
            cal: Calendar::new(),
            streams,
            arrival_rng,
            arrival_proc,
            pool,
            next_trace: 0,
            sessions: Vec::new(),
            session_traces: Vec::new(),
            attempts: Vec::new(),
            bank,
            controller,
            cpu,
            workers,
            ledger,
            util_trace: Vec::new(),
            switch_log: Vec::new(),
            decision_log: Vec::new(),
            attempt_log: Vec::new(),
            issued_within_horizon: 0,
            completed_within_horizon: 0,
            boundary_pending: false,
            last_boundary_gen: 0,
            cfg,
        })
    }

    fn server(&self) -> &ServerParams {
        &self.cfg.server
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        self.cal
            .schedule(self.server().utilization_window, Ev::UtilTick)?;
        self.schedule_next_arrival()?;
        while let Some((t, ev)) = self.cal.next_event() {
            self.cpu.advance_to(t);
            match ev {
                Ev::SessionArrival => {
                    self.handle_arrival(t)?;
                    self.schedule_next_arrival()?;
                }
                Ev::Issue { session } => {
                    let cursor = self.sessions[session].cursor;
                    self.issue_request(session, cursor, 0, t)?;
                }
                Ev::Timeout { attempt } => self.handle_timeout(attempt, t)?,
                Ev::PhaseBoundary { generation } => {
                    if generation == self.cpu.generation() {
                        self.boundary_pending = false;
                        for attempt in self.cpu.pop_phase_completions() {
                            self.complete_service(attempt as usize, t)?;
                        }
                    }
                }
                Ev::UtilTick => self.handle_util_tick(t)?,
            }
            self.dispatch(t);
            self.resync_boundary(t)?;
        }
        Ok(())
    }

    fn schedule_next_arrival(&mut self) -> Result<(), SimError> {
        if let Some(t) = self.arrival_proc.next(&mut self.arrival_rng) {
            if t < self.cfg.horizon {
                self.cal.schedule(t, Ev::SessionArrival)?;
            }
        }
        Ok(())
    }

    fn handle_arrival(&mut self, now: f64) -> Result<(), SimError> {
        let sid = self.sessions.len();
        let trace = if self.cfg.cycle_pool {
            let trace = self.pool[self.next_trace].clone();
            self.next_trace = (self.next_trace + 1) % self.pool.len();
            trace
        } else {
            let mut rng = self.streams.keyed(Stream::Traces, sid as u64, 0, 0);
            self.cfg.model.sample_trace(sid as u64, &mut rng).requests
        };
        self.ledger.sessions.arrived += 1;
        self.ledger.trace_positions_total += trace.len() as u64;
        self.sessions
            .push(SessionInstance::new(self.next_trace, trace.len(), now));
        self.session_traces.push(trace);
        self.issue_request(sid, 0, 0, now)
    }

    fn issue_request(
        &mut self,
        sid: usize,
        position: usize,
        attempt_no: u32,
        now: f64,
    ) -> Result<(), SimError> {
        let type_index = self.session_traces[sid][position];
        let mut timeout_rng =
            self.streams
                .keyed(Stream::Timeouts, sid as u64, position as u64, attempt_no as u64);
        let deadline = self.cfg.timeout.sample_deadline(now, &mut timeout_rng);
        let mut demand_rng =
            self.streams
                .keyed(Stream::Demands, sid as u64, position as u64, attempt_no as u64);
        let demand = self
            .cfg
            .profile
            .sample(self.cfg.model.types[type_index].mean_exec(), &mut demand_rng);
        let attempt_id = self.attempts.len();
        self.attempts.push(Attempt {
            session: sid,
            position,
            attempt_no,
            type_index,
            issue_time: now,
            deadline,
            demand: Some(demand),
            resolved: false,
        });
        self.ledger.record_generated(type_index);
        if now <= self.cfg.horizon {
            self.issued_within_horizon += 1;
        }
        let outcome = self
            .bank
            .enqueue(QueuedRequest {
                attempt: attempt_id as u64,
                type_index,
            })
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        match outcome {
            EnqueueOutcome::Accepted(_) => {
                if deadline.is_finite() {
                    self.cal.schedule(deadline, Ev::Timeout { attempt: attempt_id })?;
                }
            }
            EnqueueOutcome::Dropped => {
                self.resolve(attempt_id, AttemptResolution::Dropped, now);
                self.fail_request(sid);
            }
        }
        Ok(())
    }

    fn handle_timeout(&mut self, attempt_id: usize, now: f64) -> Result<(), SimError> {
        if self.attempts[attempt_id].resolved {
            return Ok(()); // completed before the deadline
        }
        self.resolve(attempt_id, AttemptResolution::TimedOut, now);
        let (sid, position, attempt_no) = {
            let a = &self.attempts[attempt_id];
            (a.session, a.position, a.attempt_no)
        };
        let mut retry_rng =
            self.streams
                .keyed(Stream::Retries, sid as u64, position as u64, attempt_no as u64);
        match on_timeout(attempt_no, &self.cfg.retry, &mut retry_rng) {
            TimeoutAction::Retry => self.issue_request(sid, position, attempt_no + 1, now),
            TimeoutAction::Abandon => {
                self.fail_request(sid);
                Ok(())
            }
        }
    }

    fn complete_service(&mut self, attempt_id: usize, now: f64) -> Result<(), SimError> {
        self.workers.release();
        if self.attempts[attempt_id].resolved {
            // The client gave up earlier; the server just finished
            // unproductive work.
            return Ok(());
        }
        self.resolve(attempt_id, AttemptResolution::Completed, now);
        if now <= self.cfg.horizon {
            self.completed_within_horizon += 1;
        }
        let sid = self.attempts[attempt_id].session;
        match self.sessions[sid].resolve_request(RequestOutcome::Success) {
            SessionAction::Completed => {
                self.ledger.sessions.completed += 1;
                self.ledger.positions_issued += self.sessions[sid].trace_len as u64;
                let duration = now - self.sessions[sid].arrival_time;
                self.ledger.session_durations.push(duration);
                Ok(())
            }
            SessionAction::IssueNext { cursor } => {
                if self.cfg.think_time > 0.0 {
                    self.cal
                        .schedule(now + self.cfg.think_time, Ev::Issue { session: sid })?;
                    Ok(())
                } else {
                    self.issue_request(sid, cursor, 0, now)
                }
            }
            SessionAction::Aborted { .. } => unreachable!("success never aborts"),
        }
    }

    fn fail_request(&mut self, sid: usize) {
        match self.sessions[sid].resolve_request(RequestOutcome::Failure) {
            SessionAction::Aborted { .. } => {
                let next = self.sessions[sid].cursor + 1;
                let types: Vec<usize> = self.session_traces[sid][next..].to_vec();
                for type_index in types {
                    self.ledger.record_not_generated(type_index, 1);
                }
                self.ledger.sessions.aborted += 1;
                self.ledger.positions_issued += self.sessions[sid].issued_positions() as u64;
            }
            _ => unreachable!("failure always aborts"),
        }
    }

    fn resolve(&mut self, attempt_id: usize, kind: AttemptResolution, now: f64) {
        let a = &mut self.attempts[attempt_id];
        assert!(!a.resolved, "attempt resolved twice (double count)");
        a.resolved = true;
        let outcome = match kind {
            AttemptResolution::Completed => AttemptOutcome::Completed {
                completion: now,
                response: now - a.issue_time,
            },
            AttemptResolution::TimedOut => AttemptOutcome::TimedOut,
            AttemptResolution::Dropped => AttemptOutcome::Dropped,
        };
        self.ledger.record_outcome(a.type_index, outcome);
        if self.cfg.record_detail {
            self.attempt_log.push(AttemptRecord {
                session: a.session as u64,
                position: a.position,
                attempt: a.attempt_no,
                type_index: a.type_index,
                issue_time: a.issue_time,
                deadline: a.deadline,
                resolution_time: now,
                kind,
            });
        }
    }

    /// Work conservation: as long as a worker and a pending request exist,
    /// pair them. The discipline controller is re-evaluated before every
    /// decision.
    fn dispatch(&mut self, now: f64) {
        while self.workers.available() > 0 && self.bank.total_pending() > 0 {
            let util = self.cpu.utilization(now);
            if let Some(sw) = self.controller.observe(util) {
                self.switch_log.push(SwitchRecord {
                    time: now,
                    from: sw.from,
                    to: sw.to,
                    utilization: sw.utilization,
                });
            }
            let policy = self.controller.policy();
            let pending = if self.cfg.record_detail {
                Some(self.bank.pending_counts())
            } else {
                None
            };
            let sel = self
                .bank
                .select_next(policy)
                .expect("bank has pending requests");
            if let Some(pending) = pending {
                self.decision_log.push(DecisionRecord {
                    time: now,
                    pending,
                    queue: sel.queue,
                    from_tail: sel.from_tail,
                    policy,
                });
            }
            self.workers.acquire();
            let demand = self.attempts[sel.request.attempt as usize]
                .demand
                .take()
                .expect("demand is sampled at issue time");
            self.cpu.start(now, sel.request.attempt, demand);
        }
    }

    fn resync_boundary(&mut self, now: f64) -> Result<(), SimError> {
        if self.cpu.generation() != self.last_boundary_gen {
            self.last_boundary_gen = self.cpu.generation();
            self.boundary_pending = false;
        }
        if !self.boundary_pending {
            if let Some(dt) = self.cpu.next_boundary_in() {
                self.cal.schedule(
                    now + dt,
                    Ev::PhaseBoundary {
                        generation: self.cpu.generation(),
                    },
                )?;
                self.boundary_pending = true;
            }
        }
        Ok(())
    }

    fn handle_util_tick(&mut self, now: f64) -> Result<(), SimError> {
        let util = self.cpu.utilization(now);
        if let Some(sw) = self.controller.observe(util) {
            self.switch_log.push(SwitchRecord {
                time: now,
                from: sw.from,
                to: sw.to,
                utilization: sw.utilization,
            });
        }
        self.util_trace.push(UtilSample {
            time: now,
            utilization: util,
            policy: self.controller.policy(),
        });
        let active = self.workers.busy_workers > 0 || self.bank.total_pending() > 0;
        if now < self.cfg.horizon || active {
            self.cal
                .schedule(now + self.server().utilization_window, Ev::UtilTick)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<RunResult, SimError> {
        debug_assert!(self
            .sessions
            .iter()
            .all(|s| s.status != SessionStatus::Active));
        debug_assert_eq!(self.cpu.in_service(), 0);
        debug_assert_eq!(self.bank.total_pending(), 0);
        if !self.ledger.conservation_holds() {
            return Err(SimError::ConservationViolated);
        }
        let queue_meta = self
            .bank
            .queues
            .iter()
            .map(|q| QueueMeta {
                label: q.label.clone(),
                class: q.class,
                utility: q.utility,
                capacity: q.capacity,
            })
            .collect();
        Ok(RunResult {
            ledger: self.ledger,
            util_trace: self.util_trace,
            switch_log: self.switch_log,
            decision_log: self.decision_log,
            attempt_log: self.attempt_log,
            queue_meta,
            horizon: self.cfg.horizon,
            issued_within_horizon: self.issued_within_horizon,
            completed_within_horizon: self.completed_within_horizon,
            end_time: self.cal.clock(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::ThinkDistribution;
    use crate::server::PhaseDistribution;
    use crate::workload::{default_retail_model, single_request_model};

    fn single_type_config(seed: u64, rate: f64, horizon: f64) -> RunConfig {
        let model = single_request_model(290.0);
        RunConfig {
            seed,
            scheme: Scheme::AlwaysFifo,
            session_rate: rate,
            horizon,
            utilities: UtilityTable {
                utilities: vec![1.0],
                browsing_scale: 1.0,
                transaction_scale: 1.0,
            },
            model,
            profile: PhaseProfile::cpu_intensive(),
            timeout: TimeoutModel::fixed(20.0),
            retry: RetryPolicy::disabled(),
            server: ServerParams {
                single_queue_capacity: 50,
                ..ServerParams::default_testbed()
            },
            pool_size: 1,
            cycle_pool: true,
            think_time: 0.0,
            record_detail: false,
        }
    }

    fn retail_config(seed: u64, session_rate: f64, horizon: f64, scheme: Scheme) -> RunConfig {
        let model = default_retail_model();
        let q = model.reach_probabilities().unwrap();
        let utilities = UtilityTable::derive(&model, &q, 1000.0, 5000.0).unwrap();
        RunConfig {
            seed,
            scheme,
            session_rate,
            horizon,
            model,
            utilities,
            profile: PhaseProfile::default_ecommerce(),
            timeout: TimeoutModel {
                base_timeout: 8.0,
                think_timeout_mean: 12.0,
                think_distribution: ThinkDistribution::Exponential,
            },
            retry: RetryPolicy::default_ecommerce(),
            server: ServerParams::default_testbed(),
            pool_size: 100,
            cycle_pool: true,
            think_time: 0.0,
            record_detail: true,
        }
    }

    #[test]
    fn zero_rate_run_is_empty() {
        let cfg = single_type_config(1, 0.0, 100.0);
        let result = run(cfg).unwrap();
        let overall = result.ledger.overall();
        assert_eq!(overall.generated, 0);
        assert_eq!(result.ledger.sessions.arrived, 0);
        assert!(result.ledger.conservation_holds());
    }

    #[test]
    fn light_load_requests_complete_at_their_service_time() {
        // One request at a time: the 290 ms busy phase runs uncontended.
        let cfg = single_type_config(2, 0.2, 500.0);
        let result = run(cfg).unwrap();
        let overall = result.ledger.overall();
        assert!(overall.generated > 50);
        assert_eq!(overall.completed, overall.generated);
        assert_eq!(overall.dropped + overall.timed_out, 0);
        let samples = result.ledger.samples_for(None);
        // Most arrivals find an empty system; their response is exactly the
        // busy time.
        let solo = samples
            .iter()
            .filter(|(_, r)| (r - 0.290).abs() < 1e-9)
            .count();
        assert!(solo as f64 > 0.8 * samples.len() as f64);
        assert!(result.ledger.conservation_holds());
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let a = run(retail_config(7, 2.0, 300.0, Scheme::EightQLifoPri)).unwrap();
        let b = run(retail_config(7, 2.0, 300.0, Scheme::EightQLifoPri)).unwrap();
        assert_eq!(a.ledger.overall(), b.ledger.overall());
        assert_eq!(a.ledger.sessions, b.ledger.sessions);
        assert_eq!(a.ledger.samples_for(None), b.ledger.samples_for(None));
        assert_eq!(a.switch_log, b.switch_log);
        assert_eq!(a.decision_log, b.decision_log);
        assert_eq!(a.end_time, b.end_time);
        let c = run(retail_config(8, 2.0, 300.0, Scheme::EightQLifoPri)).unwrap();
        assert_ne!(a.ledger.samples_for(None), c.ledger.samples_for(None));
    }

    #[test]
    fn overloaded_retail_run_conserves_outcomes() {
        for scheme in [Scheme::Sq, Scheme::EightQAf, Scheme::EightQLifoPri] {
            let result = run(retail_config(3, 6.0, 400.0, scheme)).unwrap();
            assert!(result.ledger.conservation_holds());
            let overall = result.ledger.overall();
            assert!(overall.generated > 1000);
            assert!(overall.dropped > 0, "{scheme}: expected drops under overload");
            let sessions = result.ledger.sessions;
            assert_eq!(sessions.arrived, sessions.completed + sessions.aborted);
        }
    }

    #[test]
    fn attempts_respect_deadlines_and_retry_budget() {
        let result = run(retail_config(4, 5.0, 300.0, Scheme::Sq)).unwrap();
        assert!(!result.attempt_log.is_empty());
        let policy = RetryPolicy::default_ecommerce();
        for a in &result.attempt_log {
            assert!(a.attempt <= policy.max_retries);
            match a.kind {
                AttemptResolution::Completed => {
                    assert!(a.resolution_time <= a.deadline + 1e-9);
                    assert!(a.resolution_time >= a.issue_time);
                }
                AttemptResolution::TimedOut => {
                    assert!((a.resolution_time - a.deadline).abs() < 1e-9);
                }
                AttemptResolution::Dropped => {
                    assert_eq!(a.resolution_time, a.issue_time);
                }
            }
        }
        // Causal ordering within each session: issue times never decrease,
        // and position k+1 is only issued after position k resolved.
        let mut per_session: std::collections::BTreeMap<u64, Vec<&AttemptRecord>> =
            std::collections::BTreeMap::new();
        for a in &result.attempt_log {
            per_session.entry(a.session).or_default().push(a);
        }
        for (_, mut attempts) in per_session {
            attempts.sort_by(|a, b| {
                (a.position, a.attempt)
                    .partial_cmp(&(b.position, b.attempt))
                    .unwrap()
            });
            for pair in attempts.windows(2) {
                assert!(pair[1].issue_time >= pair[0].issue_time - 1e-9);
            }
        }
    }

    #[test]
    fn throughput_is_bounded_by_the_cpu() {
        // Way past saturation the single CPU caps completions at 1/0.29 per
        // second regardless of the worker count. Timeouts are disabled so
        // every served request counts.
        let mut cfg = single_type_config(5, 10.0, 400.0);
        cfg.timeout = TimeoutModel::infinite();
        let result = run(cfg).unwrap();
        let tp = result.ledger.throughput(40.0, 400.0);
        assert!(tp < 1.0 / 0.29 * 1.02, "throughput {tp}");
        assert!(tp > 1.0 / 0.29 * 0.90, "throughput {tp}");
    }

    #[test]
    fn saturated_fifo_with_short_deadlines_starves_completions() {
        // With a 20 s flat deadline and the queue pinned at capacity, a FIFO
        // response is backlog-bound (~23 s): virtually every accepted request
        // times out before its reply, and the server grinds unproductively.
        let cfg = single_type_config(5, 10.0, 400.0);
        let result = run(cfg).unwrap();
        let overall = result.ledger.overall();
        let accepted = overall.generated - overall.dropped;
        assert!(overall.timed_out as f64 > 0.9 * accepted as f64);
        assert!((overall.completed as f64) < 0.1 * overall.generated as f64);
    }

    #[test]
    fn work_conservation_keeps_workers_fed() {
        // At overload with a deep queue, no completions gap appears: the
        // switch/util traces show a pegged CPU.
        let cfg = single_type_config(6, 6.0, 120.0);
        let result = run(cfg).unwrap();
        let pegged = result
            .util_trace
            .iter()
            .filter(|s| s.time > 20.0 && s.time <= 120.0)
            .all(|s| s.utilization > 0.98);
        assert!(pegged, "CPU should stay busy under sustained overload");
    }

    #[test]
    fn lifo_at_overload_switches_and_logs() {
        let mut cfg = single_type_config(7, 6.0, 200.0);
        cfg.scheme = Scheme::LifoAtOverload;
        let result = run(cfg).unwrap();
        assert!(!result.switch_log.is_empty(), "expected at least one switch");
        let first = &result.switch_log[0];
        assert_eq!(first.from, Discipline::Fifo);
        assert_eq!(first.to, Discipline::Lifo);
        assert!(first.utilization > 0.99);
        for s in &result.switch_log {
            match s.to {
                Discipline::Lifo => assert!(s.utilization > 0.99),
                Discipline::Fifo => assert!(s.utilization < 0.95),
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = single_type_config(1, 1.0, 100.0);
        cfg.horizon = 0.0;
        assert!(matches!(run(cfg), Err(SimError::ConfigInvalid(_))));
        let mut cfg = single_type_config(1, 1.0, 100.0);
        cfg.pool_size = 0;
        assert!(matches!(run(cfg), Err(SimError::ConfigInvalid(_))));
        let mut cfg = single_type_config(1, 1.0, 100.0);
        cfg.model.transitions[0] = vec![1.0, 0.0];
        assert!(matches!(run(cfg), Err(SimError::ConfigInvalid(_))));
    }
}
