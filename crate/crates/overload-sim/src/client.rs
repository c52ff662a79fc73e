//! Client behavior: per-request deadlines, probabilistic bounded retries,
//! session progression, and Poisson session arrivals.
//!
//! A request's deadline is a fixed base timeout plus a think component (the
//! extra patience while waiting for a slow script to start replying). When a
//! deadline passes unanswered the client abandons the attempt, retrying with
//! probability `p` up to `M` times; once a request fails for good the whole
//! session fails and its remaining requests are never issued. The server is
//! not told about abandonment and keeps serving the original attempt.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThinkDistribution {
    Exponential,
    Fixed,
}

/// Deadline model: `deadline = issue + base + T`, `E[T] = think_mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeoutModel {
    /// Seconds. The load generator's hard timeout for forward progress.
    pub base_timeout: f64,
    /// Seconds. Mean of the think component added while waiting for a reply.
    pub think_timeout_mean: f64,
    pub think_distribution: ThinkDistribution,
}

impl TimeoutModel {
    /// 8 s base plus an exponential 12 s think component: 20 s expected.
    pub fn default_ecommerce() -> Self {
        TimeoutModel {
            base_timeout: 8.0,
            think_timeout_mean: 12.0,
            think_distribution: ThinkDistribution::Exponential,
        }
    }

    /// Flat deadline with no randomness, as in the single-queue experiments.
    pub fn fixed(total: f64) -> Self {
        TimeoutModel {
            base_timeout: total,
            think_timeout_mean: 0.0,
            think_distribution: ThinkDistribution::Fixed,
        }
    }

    /// No deadline at all (used for capacity calibration).
    pub fn infinite() -> Self {
        TimeoutModel {
            base_timeout: f64::INFINITY,
            think_timeout_mean: 0.0,
            think_distribution: ThinkDistribution::Fixed,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.base_timeout.is_infinite()
    }

    pub fn sample_deadline(&self, issue_time: f64, rng: &mut impl Rng) -> f64 {
        let think = match self.think_distribution {
            ThinkDistribution::Fixed => self.think_timeout_mean,
            ThinkDistribution::Exponential => {
                if self.think_timeout_mean <= 0.0 {
                    0.0
                } else {
                    let u: f64 = rng.random();
                    -self.think_timeout_mean * (1.0 - u).ln()
                }
            }
        };
        issue_time + self.base_timeout + think
    }
}

/// Retry a timed-out request with probability `p`, at most `max_retries`
/// times; a request is issued at most `1 + max_retries` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retry_probability: f64,
    pub max_retries: u32,
}

impl RetryPolicy {
    pub fn default_ecommerce() -> Self {
        RetryPolicy {
            retry_probability: 0.4,
            max_retries: 5,
        }
    }

    pub fn disabled() -> Self {
        RetryPolicy {
            retry_probability: 0.0,
            max_retries: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutAction {
    /// Reissue the request as a fresh arrival with the next attempt number.
    Retry,
    /// Give up; the request (and with it the session) has failed.
    Abandon,
}

/// Decides what a client does the instant an attempt times out.
pub fn on_timeout(attempt: u32, policy: &RetryPolicy, rng: &mut impl Rng) -> TimeoutAction {
    if attempt >= policy.max_retries {
        return TimeoutAction::Abandon;
    }
    let u: f64 = rng.random();
    if u < policy.retry_probability {
        TimeoutAction::Retry
    } else {
        TimeoutAction::Abandon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Active,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionAction {
    /// Issue the request at the new cursor position.
    IssueNext { cursor: usize },
    /// The trace is exhausted; the session completed.
    Completed,
    /// The session failed; this many trailing requests are never generated.
    Aborted { not_generated: usize },
}

/// One user's journey through a trace. Requests are issued strictly
/// sequentially: position `k + 1` goes out only after position `k` succeeded.
#[derive(Debug, Clone)]
pub struct SessionInstance {
    pub trace_index: usize,
    pub trace_len: usize,
    pub cursor: usize,
    pub status: SessionStatus,
    pub arrival_time: f64,
}

impl SessionInstance {
    pub fn new(trace_index: usize, trace_len: usize, arrival_time: f64) -> Self {
        assert!(trace_len > 0, "traces are never empty");
        SessionInstance {
            trace_index,
            trace_len,
            cursor: 0,
            status: SessionStatus::Active,
            arrival_time,
        }
    }

    /// Settles the request at the cursor and returns what happens next.
    pub fn resolve_request(&mut self, outcome: RequestOutcome) -> SessionAction {
        assert_eq!(self.status, SessionStatus::Active);
        match outcome {
            RequestOutcome::Success => {
                self.cursor += 1;
                if self.cursor == self.trace_len {
                    self.status = SessionStatus::Completed;
                    SessionAction::Completed
                } else {
                    SessionAction::IssueNext {
                        cursor: self.cursor,
                    }
                }
            }
            RequestOutcome::Failure => {
                self.status = SessionStatus::Aborted;
                SessionAction::Aborted {
                    not_generated: self.trace_len - self.cursor - 1,
                }
            }
        }
    }

    /// Trace positions that were actually issued.
    pub fn issued_positions(&self) -> usize {
        match self.status {
            SessionStatus::Completed => self.trace_len,
            _ => self.cursor + 1,
        }
    }
}

/// Poisson arrival process: exponential inter-arrival gaps at rate `rate`.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    rate: f64,
    next_time: f64,
}

impl ArrivalProcess {
    pub fn new(rate: f64) -> Self {
        ArrivalProcess {
            rate,
            next_time: 0.0,
        }
    }

    /// Next arrival instant, or `None` for a zero-rate process.
    pub fn next(&mut self, rng: &mut impl Rng) -> Option<f64> {
        if self.rate <= 0.0 {
            return None;
        }
        let u: f64 = rng.random();
        self.next_time += -(1.0 - u).ln() / self.rate;
        Some(self.next_time)
    }
}

/// All session arrivals on `[0, horizon)` with their trace assignments,
/// cycling through the pool in arrival order.
pub fn schedule_session_arrivals(
    rate: f64,
    horizon: f64,
    pool_size: usize,
    rng: &mut impl Rng,
) -> Vec<(f64, usize)> {
    let mut process = ArrivalProcess::new(rate);
    let mut arrivals = Vec::new();
    while let Some(t) = process.next(rng) {
        if t >= horizon {
            break;
        }
        arrivals.push((t, arrivals.len() % pool_size.max(1)));
    }
    arrivals
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_deadline_is_exact() {
        let tm = TimeoutModel {
            base_timeout: 8.0,
            think_timeout_mean: 12.0,
            think_distribution: ThinkDistribution::Fixed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(tm.sample_deadline(0.0, &mut rng), 20.0);
        assert_eq!(tm.sample_deadline(5.0, &mut rng), 25.0);
    }

    #[test]
    fn zero_think_mean_gives_base_only() {
        let tm = TimeoutModel {
            base_timeout: 8.0,
            think_timeout_mean: 0.0,
            think_distribution: ThinkDistribution::Exponential,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(tm.sample_deadline(0.0, &mut rng), 8.0);
    }

    #[test]
    fn exponential_deadline_mean_is_twenty_seconds() {
        let tm = TimeoutModel::default_ecommerce();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| tm.sample_deadline(0.0, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 20.0).abs() < 0.15, "mean deadline {mean}");
    }

    #[test]
    fn exhausted_budget_always_abandons() {
        let policy = RetryPolicy::default_ecommerce();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(on_timeout(5, &policy, &mut rng), TimeoutAction::Abandon);
        }
    }

    #[test]
    fn zero_probability_always_abandons() {
        let policy = RetryPolicy {
            retry_probability: 0.0,
            max_retries: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert_eq!(on_timeout(0, &policy, &mut rng), TimeoutAction::Abandon);
        }
    }

    #[test]
    fn retry_fraction_matches_probability() {
        let policy = RetryPolicy::default_ecommerce();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let retries = (0..n)
            .filter(|_| on_timeout(0, &policy, &mut rng) == TimeoutAction::Retry)
            .count();
        let frac = retries as f64 / n as f64;
        assert!((frac - 0.4).abs() < 0.005, "retry fraction {frac}");
    }

    #[test]
    fn single_request_session_completes() {
        let mut s = SessionInstance::new(0, 1, 0.0);
        assert_eq!(
            s.resolve_request(RequestOutcome::Success),
            SessionAction::Completed
        );
        assert_eq!(s.status, SessionStatus::Completed);
        assert_eq!(s.issued_positions(), 1);
    }

    #[test]
    fn failure_at_third_request_leaves_seven_ungenerated() {
        let mut s = SessionInstance::new(0, 10, 0.0);
        assert_eq!(
            s.resolve_request(RequestOutcome::Success),
            SessionAction::IssueNext { cursor: 1 }
        );
        assert_eq!(
            s.resolve_request(RequestOutcome::Success),
            SessionAction::IssueNext { cursor: 2 }
        );
        assert_eq!(
            s.resolve_request(RequestOutcome::Failure),
            SessionAction::Aborted { not_generated: 7 }
        );
        assert_eq!(s.issued_positions(), 3);
        assert_eq!(s.issued_positions() + 7, 10);
    }

    #[test]
    fn poisson_count_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let horizon = 100_000.0;
        let arrivals = schedule_session_arrivals(1.0, horizon, 1000, &mut rng);
        let n = arrivals.len() as f64;
        assert!((n - horizon).abs() < 3.0 * horizon.sqrt(), "count {n}");
    }

    #[test]
    fn inter_arrival_mean_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rate = 4.0;
        let arrivals = schedule_session_arrivals(rate, 25_000.0, 1000, &mut rng);
        let mean_gap = arrivals.last().unwrap().0 / arrivals.len() as f64;
        assert!(
            (mean_gap - 1.0 / rate).abs() < 0.01 / rate,
            "mean gap {mean_gap}"
        );
    }

    #[test]
    fn pool_of_one_assigns_the_same_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let arrivals = schedule_session_arrivals(1.0, 100.0, 1, &mut rng);
        assert!(arrivals.iter().all(|&(_, idx)| idx == 0));
    }

    #[test]
    fn arrivals_cycle_through_the_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let arrivals = schedule_session_arrivals(1.0, 10.0, 3, &mut rng);
        for (i, &(_, idx)) in arrivals.iter().enumerate() {
            assert_eq!(idx, i % 3);
        }
    }

    #[test]
    fn zero_rate_never_arrives() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(schedule_session_arrivals(0.0, 1000.0, 10, &mut rng).is_empty());
    }
}
