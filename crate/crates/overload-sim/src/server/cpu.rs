//! Processor-shared CPU with a trailing utilization window.
//!
//! All executions currently in a busy phase share the single CPU equally:
//! with `B` busy threads each progresses at rate `1/B`. Waiting phases elapse
//! at rate 1 regardless. Progress is integrated analytically between events,
//! so there is no time-step error; the engine advances the CPU exactly to the
//! next phase boundary.

use super::demand::{PhaseKind, ServiceDemand};
use std::collections::VecDeque;

/// Residual phase time at or below which a phase counts as finished.
const COMPLETION_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Execution {
    attempt: u64,
    phases: Vec<(PhaseKind, f64)>,
    phase_idx: usize,
    remaining: f64,
}

impl Execution {
    fn kind(&self) -> PhaseKind {
        self.phases[self.phase_idx].0
    }
}

/// Single CPU shared by every in-service request.
#[derive(Debug)]
pub struct Cpu {
    executions: Vec<Execution>,
    last_update: f64,
    /// Merged `[start, end)` intervals during which at least one busy phase
    /// was in progress; pruned to the utilization window.
    busy_segments: VecDeque<(f64, f64)>,
    window: f64,
    total_busy: f64,
    generation: u64,
}

impl Cpu {
    pub fn new(window: f64) -> Self {
        Cpu {
            executions: Vec::new(),
            last_update: 0.0,
            busy_segments: VecDeque::new(),
            window,
            total_busy: 0.0,
            generation: 0,
        }
    }

    /// Number of executions currently in a busy phase.
    pub fn busy_threads(&self) -> usize {
        self.executions
            .iter()
            .filter(|e| e.kind() == PhaseKind::Busy)
            .count()
    }

    pub fn in_service(&self) -> usize {
        self.executions.len()
    }

    /// Bumped whenever the set of executions or any phase changes; stale
    /// boundary events carry an older generation and are ignored.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn now(&self) -> f64 {
        self.last_update
    }

    /// Accumulated busy time since the start of the run.
    pub fn total_busy(&self) -> f64 {
        self.total_busy
    }

    /// Admits a request for service. The caller must have advanced the CPU to
    /// `now` first.
    pub fn start(&mut self, now: f64, attempt: u64, demand: ServiceDemand) {
        debug_assert!((now - self.last_update).abs() < 1e-9);
        debug_assert!(!demand.phases.is_empty());
        let remaining = demand.phases[0].1;
        self.executions.push(Execution {
            attempt,
            phases: demand.phases,
            phase_idx: 0,
            remaining,
        });
        self.generation += 1;
    }

    /// Integrates progress from the last update to `now`. The busy-thread
    /// count is constant over that interval because every change happens
    /// through an event that advances the CPU first.
    pub fn advance_to(&mut self, now: f64) {
        let dt = now - self.last_update;
        debug_assert!(dt > -1e-9, "clock went backward: {dt}");
        if dt <= 0.0 {
            self.last_update = now;
            return;
        }
        let busy = self.busy_threads();
        if busy > 0 {
            let share = dt / busy as f64;
            for e in &mut self.executions {
                match e.kind() {
                    PhaseKind::Busy => e.remaining -= share,
                    PhaseKind::Wait => e.remaining -= dt,
                }
            }
            self.total_busy += dt;
            self.push_busy_segment(self.last_update, now);
        } else {
            for e in &mut self.executions {
                debug_assert_eq!(e.kind(), PhaseKind::Wait);
                e.remaining -= dt;
            }
        }
        self.last_update = now;
        self.prune_segments(now);
    }

    /// Time until the next phase completes at the current busy-thread count,
    /// or `None` when nothing is in service.
    pub fn next_boundary_in(&self) -> Option<f64> {
        let busy = self.busy_threads() as f64;
        self.executions
            .iter()
            .map(|e| {
                let left = e.remaining.max(0.0);
                match e.kind() {
                    PhaseKind::Busy => left * busy,
                    PhaseKind::Wait => left,
                }
            })
            .min_by(|a, b| a.partial_cmp(b).expect("finite boundary"))
    }

    /// Transitions every execution whose current phase has run out. Returns
    /// the attempts whose whole demand finished. Internal busy<->wait phase
    /// switches are handled here and only bump the generation.
    pub fn pop_phase_completions(&mut self) -> Vec<u64> {
        let mut finished = Vec::new();
        let mut changed = false;
        let mut i = 0;
        while i < self.executions.len() {
            if self.executions[i].remaining <= COMPLETION_EPS {
                changed = true;
                let e = &mut self.executions[i];
                e.phase_idx += 1;
                if e.phase_idx == e.phases.len() {
                    finished.push(e.attempt);
                    self.executions.swap_remove(i);
                    continue; // re-examine the element swapped into `i`
                } else {
                    e.remaining = e.phases[e.phase_idx].1;
                }
            }
            i += 1;
        }
        if changed {
            self.generation += 1;
        }
        finished
    }

    /// Convenience used by the unit tests and the simulation engine alike:
    /// advance by `dt` and collect finished attempts.
    pub fn advance(&mut self, dt: f64) -> Vec<u64> {
        self.advance_to(self.last_update + dt);
        self.pop_phase_completions()
    }

    /// Busy time within the trailing window divided by the window length.
    /// Before one full window has elapsed the divisor is the elapsed time.
    pub fn utilization(&self, now: f64) -> f64 {
        let horizon = (now - self.window).max(0.0);
        let span = now - horizon;
        if span <= 0.0 {
            return 0.0;
        }
        let mut busy = 0.0;
        for &(s, e) in &self.busy_segments {
            let s = s.max(horizon);
            let e = e.min(now);
            if e > s {
                busy += e - s;
            }
        }
        // Count the open segment up to `now` when the CPU is busy right now.
        if self.busy_threads() > 0 && now > self.last_update {
            busy += now - self.last_update.max(horizon);
        }
        (busy / span).clamp(0.0, 1.0)
    }

    fn push_busy_segment(&mut self, start: f64, end: f64) {
        if let Some(last) = self.busy_segments.back_mut() {
            if (start - last.1).abs() < 1e-12 {
                last.1 = end;
                return;
            }
        }
        self.busy_segments.push_back((start, end));
    }

    fn prune_segments(&mut self, now: f64) {
        let horizon = now - self.window;
        while let Some(&(_, e)) = self.busy_segments.front() {
            if e < horizon {
                self.busy_segments.pop_front();
            } else {
                break;
            }
        }
    }
}

/// Bounded pool of worker threads; a worker is held for the full demand,
/// waiting phases included.
#[derive(Debug, Clone, Copy)]
pub struct WorkerPool {
    pub max_workers: usize,
    pub busy_workers: usize,
}

impl WorkerPool {
    pub fn new(max_workers: usize) -> Self {
        WorkerPool {
            max_workers,
            busy_workers: 0,
        }
    }

    pub fn available(&self) -> usize {
        self.max_workers - self.busy_workers
    }

    pub fn acquire(&mut self) {
        assert!(self.busy_workers < self.max_workers, "worker pool exhausted");
        self.busy_workers += 1;
    }

    pub fn release(&mut self) {
        assert!(self.busy_workers > 0, "released an idle worker");
        self.busy_workers -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn busy(duration: f64) -> ServiceDemand {
        ServiceDemand {
            phases: vec![(PhaseKind::Busy, duration)],
        }
    }

    fn wait(duration: f64) -> ServiceDemand {
        ServiceDemand {
            phases: vec![(PhaseKind::Wait, duration)],
        }
    }

    #[test]
    fn single_busy_thread_progresses_at_full_rate() {
        let mut cpu = Cpu::new(1.0);
        cpu.start(0.0, 1, busy(0.100));
        let done = cpu.advance(0.100);
        assert_eq!(done, vec![1]);
        assert!((cpu.utilization(0.100) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_busy_threads_share_the_cpu() {
        let mut cpu = Cpu::new(1.0);
        for id in 0..4 {
            cpu.start(0.0, id, busy(0.100));
        }
        let done = cpu.advance(0.100);
        assert!(done.is_empty()); // each only progressed 25 ms
        assert!((cpu.next_boundary_in().unwrap() - 0.300).abs() < 1e-9);
        let done = cpu.advance(0.300);
        assert_eq!(done.len(), 4);
    }

    #[test]
    fn waiting_phases_elapse_without_cpu() {
        let mut cpu = Cpu::new(1.0);
        cpu.start(0.0, 7, wait(0.100));
        let done = cpu.advance(0.100);
        assert_eq!(done, vec![7]);
        assert_eq!(cpu.utilization(0.100), 0.0);
        assert_eq!(cpu.total_busy(), 0.0);
    }

    #[test]
    fn wait_phases_progress_while_others_compute() {
        let mut cpu = Cpu::new(1.0);
        cpu.start(0.0, 1, busy(0.200));
        cpu.start(0.0, 2, wait(0.100));
        let done = cpu.advance(0.100);
        assert_eq!(done, vec![2]);
        // The busy one got the whole CPU: 100 ms of its 200 ms done.
        assert!((cpu.next_boundary_in().unwrap() - 0.100).abs() < 1e-9);
    }

    #[test]
    fn busy_to_wait_transition_releases_the_cpu() {
        let mut cpu = Cpu::new(1.0);
        cpu.start(
            0.0,
            1,
            ServiceDemand {
                phases: vec![(PhaseKind::Busy, 0.050), (PhaseKind::Wait, 0.050)],
            },
        );
        assert!(cpu.advance(0.050).is_empty());
        assert_eq!(cpu.busy_threads(), 0);
        assert_eq!(cpu.advance(0.050), vec![1]);
        assert!((cpu.utilization(0.100) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn utilization_over_partial_window() {
        let mut cpu = Cpu::new(1.0);
        cpu.start(0.0, 1, busy(0.5));
        cpu.advance(0.5);
        // Busy 0.5 s out of 0.5 s elapsed.
        assert!((cpu.utilization(0.5) - 1.0).abs() < 1e-12);
        cpu.advance_to(1.0);
        // Busy 500 ms of the trailing 1000 ms window.
        assert!((cpu.utilization(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn utilization_window_trails() {
        let mut cpu = Cpu::new(1.0);
        cpu.start(0.0, 1, busy(1.0));
        cpu.advance(1.0);
        cpu.advance_to(3.0);
        assert_eq!(cpu.utilization(3.0), 0.0);
        assert!((cpu.total_busy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn processor_sharing_never_exceeds_one_cpu() {
        let mut cpu = Cpu::new(1.0);
        for id in 0..10 {
            cpu.start(0.0, id, busy(0.050));
        }
        while cpu.in_service() > 0 {
            let dt = cpu.next_boundary_in().unwrap();
            cpu.advance(dt);
        }
        let elapsed = cpu.now();
        assert!(cpu.total_busy() <= elapsed + 1e-9);
        assert!((cpu.total_busy() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn worker_pool_bounds() {
        let mut pool = WorkerPool::new(30);
        assert_eq!(pool.available(), 30);
        for _ in 0..30 {
            pool.acquire();
        }
        assert_eq!(pool.available(), 0);
        pool.release();
        assert_eq!(pool.available(), 1);
    }
}
