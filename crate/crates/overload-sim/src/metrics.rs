//! Outcome accounting and response-time distributions.
//!
//! Every issued attempt ends in exactly one of completed-in-time, timed-out,
//! or dropped; trace positions skipped after a session abort are counted as
//! not-generated. Response-time distributions are unconditional complementary
//! distributions: timed-out and dropped requests contribute an infinite
//! response time, so the CCDF levels off at the failure share instead of
//! hiding it.

use crate::workload::{RequestClass, RequestType};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("attempt resolved twice")]
    DoubleCount,
    #[error("no attempts match the requested distribution filter")]
    EmptySet,
}

/// How one issued attempt ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttemptOutcome {
    /// Served before the client deadline; carries the completion instant and
    /// the response time of this attempt.
    Completed { completion: f64, response: f64 },
    /// The client deadline passed first (the server may still have served it
    /// later; that work is unproductive and never counted as completed).
    TimedOut,
    /// Rejected at the queue: a hard failure, never retried.
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TypeCounters {
    pub generated: u64,
    pub completed: u64,
    pub timed_out: u64,
    pub dropped: u64,
    pub not_generated: u64,
}

impl TypeCounters {
    pub fn merge(&mut self, other: &TypeCounters) {
        self.generated += other.generated;
        self.completed += other.completed;
        self.timed_out += other.timed_out;
        self.dropped += other.dropped;
        self.not_generated += other.not_generated;
    }

    /// Generated attempts plus the never-issued remainder.
    pub fn intended(&self) -> u64 {
        self.generated + self.not_generated
    }

    pub fn conserved(&self) -> bool {
        self.generated == self.completed + self.timed_out + self.dropped
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionCounters {
    pub arrived: u64,
    pub completed: u64,
    pub aborted: u64,
}

/// Per-type counters plus completed-response samples for one run.
#[derive(Debug, Clone)]
pub struct OutcomeLedger {
    pub types: Vec<RequestType>,
    counters: Vec<TypeCounters>,
    /// `(completion_time, response)` per completed attempt, per type.
    samples: Vec<Vec<(f64, f64)>>,
    pub sessions: SessionCounters,
    pub session_durations: Vec<f64>,
    /// Sum of trace lengths over arrived sessions.
    pub trace_positions_total: u64,
    /// Trace positions actually issued (attempt chains, not attempts).
    pub positions_issued: u64,
}

impl OutcomeLedger {
    pub fn new(types: Vec<RequestType>) -> Self {
        let n = types.len();
        OutcomeLedger {
            types,
            counters: vec![TypeCounters::default(); n],
            samples: vec![Vec::new(); n],
            sessions: SessionCounters::default(),
            session_durations: Vec::new(),
            trace_positions_total: 0,
            positions_issued: 0,
        }
    }

    pub fn record_generated(&mut self, type_index: usize) {
        self.counters[type_index].generated += 1;
    }

    /// Exactly one outcome per attempt; the engine guards double resolution
    /// and reports it as [`MetricsError::DoubleCount`].
    pub fn record_outcome(&mut self, type_index: usize, outcome: AttemptOutcome) {
        let c = &mut self.counters[type_index];
        match outcome {
            AttemptOutcome::Completed {
                completion,
                response,
            } => {
                c.completed += 1;
                self.samples[type_index].push((completion, response));
            }
            AttemptOutcome::TimedOut => c.timed_out += 1,
            AttemptOutcome::Dropped => c.dropped += 1,
        }
    }

    pub fn record_not_generated(&mut self, type_index: usize, count: u64) {
        self.counters[type_index].not_generated += count;
    }

    pub fn counters(&self, type_index: usize) -> &TypeCounters {
        &self.counters[type_index]
    }

    pub fn class_counters(&self, class: RequestClass) -> TypeCounters {
        let mut total = TypeCounters::default();
        for (t, c) in self.types.iter().zip(&self.counters) {
            if t.class == class {
                total.merge(c);
            }
        }
        total
    }

    pub fn overall(&self) -> TypeCounters {
        let mut total = TypeCounters::default();
        for c in &self.counters {
            total.merge(c);
        }
        total
    }

    /// Per-type conservation: every generated attempt resolved exactly once.
    pub fn conservation_holds(&self) -> bool {
        self.counters.iter().all(TypeCounters::conserved)
            && self.trace_positions_total == self.positions_issued + self.overall().not_generated
    }

    pub fn samples_for(&self, filter: Option<usize>) -> Vec<(f64, f64)> {
        match filter {
            Some(i) => self.samples[i].clone(),
            None => {
                let mut all: Vec<(f64, f64)> = self.samples.iter().flatten().copied().collect();
                all.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
                all
            }
        }
    }

    /// Unconditional complementary response-time distribution over the given
    /// type (or everything when `None`).
    pub fn ccdf(&self, filter: Option<usize>) -> Result<Ccdf, MetricsError> {
        let (counters, samples) = match filter {
            Some(i) => (self.counters[i], self.samples[i].clone()),
            None => (self.overall(), self.samples_for(None)),
        };
        let mut responses: Vec<f64> = samples.iter().map(|&(_, r)| r).collect();
        responses.sort_by(|a, b| a.partial_cmp(b).expect("finite response times"));
        Ccdf::new(responses, counters.timed_out + counters.dropped)
    }

    /// Completed requests per second over `(start, end]`.
    pub fn throughput(&self, start: f64, end: f64) -> f64 {
        assert!(end > start);
        let completed = self
            .samples
            .iter()
            .flatten()
            .filter(|&&(t, _)| t > start && t <= end)
            .count();
        completed as f64 / (end - start)
    }

    /// Mean response time over all completed attempts (or the filtered type).
    pub fn mean_response(&self, filter: Option<usize>) -> Option<f64> {
        let samples = self.samples_for(filter);
        if samples.is_empty() {
            return None;
        }
        Some(samples.iter().map(|&(_, r)| r).sum::<f64>() / samples.len() as f64)
    }

    /// Table-5-shaped percentage rows over intended requests
    /// (issued + not-generated), overall and per class.
    pub fn summarize(&self) -> Vec<SummaryRow> {
        let mut rows = vec![SummaryRow::from_counters("overall", &self.overall())];
        for (class, label) in [
            (RequestClass::Browsing, "browsing"),
            (RequestClass::Transaction, "transaction"),
        ] {
            let counters = self.class_counters(class);
            if counters.intended() > 0 {
                rows.push(SummaryRow::from_counters(label, &counters));
            }
        }
        rows
    }
}

/// One summary row of outcome percentages; sums to 100 within rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scope: String,
    pub completed_pct: f64,
    pub timed_out_pct: f64,
    pub dropped_pct: f64,
    pub not_generated_pct: f64,
}

impl SummaryRow {
    fn from_counters(scope: &str, c: &TypeCounters) -> Self {
        let denom = c.intended().max(1) as f64;
        SummaryRow {
            scope: scope.to_string(),
            completed_pct: 100.0 * c.completed as f64 / denom,
            timed_out_pct: 100.0 * c.timed_out as f64 / denom,
            dropped_pct: 100.0 * c.dropped as f64 / denom,
            not_generated_pct: 100.0 * c.not_generated as f64 / denom,
        }
    }

    pub fn total(&self) -> f64 {
        self.completed_pct + self.timed_out_pct + self.dropped_pct + self.not_generated_pct
    }
}

/// Unconditional complementary distribution: `P(T > t)` where failed
/// attempts have `T = infinity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    /// Finite response times, ascending.
    sorted: Vec<f64>,
    pub failures: u64,
    pub total: u64,
}

impl Ccdf {
    pub fn new(sorted: Vec<f64>, failures: u64) -> Result<Self, MetricsError> {
        let total = sorted.len() as u64 + failures;
        if total == 0 {
            return Err(MetricsError::EmptySet);
        }
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        Ok(Ccdf {
            sorted,
            failures,
            total,
        })
    }

    /// Share of attempts with response time strictly greater than `t`
    /// (failures always count).
    pub fn value_at(&self, t: f64) -> f64 {
        let above = self.sorted.len() - self.sorted.partition_point(|&x| x <= t);
        (above as u64 + self.failures) as f64 / self.total as f64
    }

    /// Point mass at infinity: exactly `failures / total`.
    pub fn infinite_mass(&self) -> f64 {
        self.failures as f64 / self.total as f64
    }

    /// Smallest response time t with `P(T <= t) >= p`; `None` when the
    /// failure mass makes the percentile infinite.
    pub fn percentile(&self, p: f64) -> Option<f64> {
        assert!((0.0..=1.0).contains(&p));
        let needed = (p * self.total as f64).ceil() as usize;
        if needed == 0 {
            return self.sorted.first().copied();
        }
        self.sorted.get(needed - 1).copied()
    }

    /// Step points `(t, P(T > t))` for plotting/CSV emission, thinned to at
    /// most `max_points`.
    pub fn step_points(&self, max_points: usize) -> Vec<(f64, f64)> {
        if self.sorted.is_empty() {
            return Vec::new();
        }
        let n = self.sorted.len();
        let stride = n.div_ceil(max_points.max(1)).max(1);
        let mut points = Vec::new();
        let mut i = 0;
        while i < n {
            points.push((self.sorted[i], self.value_at(self.sorted[i])));
            i += stride;
        }
        let last = self.sorted[n - 1];
        if points.last().map(|&(t, _)| t) != Some(last) {
            points.push((last, self.value_at(last)));
        }
        points
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::default_retail_model;

    fn ledger() -> OutcomeLedger {
        OutcomeLedger::new(default_retail_model().types)
    }

    #[test]
    fn completion_appends_a_sample() {
        let mut l = ledger();
        l.record_generated(0);
        l.record_outcome(
            0,
            AttemptOutcome::Completed {
                completion: 3.0,
                response: 1.5,
            },
        );
        assert_eq!(l.counters(0).completed, 1);
        assert_eq!(l.samples_for(Some(0)), vec![(3.0, 1.5)]);
        assert!(l.conservation_holds());
    }

    #[test]
    fn late_completion_counts_as_timed_out_with_no_sample() {
        let mut l = ledger();
        l.record_generated(0);
        l.record_outcome(0, AttemptOutcome::TimedOut);
        assert_eq!(l.counters(0).timed_out, 1);
        assert!(l.samples_for(Some(0)).is_empty());
    }

    #[test]
    fn session_abort_counts_remaining_positions() {
        let mut l = ledger();
        for _ in 0..4 {
            l.record_not_generated(1, 1);
        }
        assert_eq!(l.counters(1).not_generated, 4);
    }

    #[test]
    fn all_failures_ccdf_is_one_everywhere() {
        let ccdf = Ccdf::new(vec![], 10).unwrap();
        for t in [0.0, 1.0, 100.0, 1e9] {
            assert_eq!(ccdf.value_at(t), 1.0);
        }
        assert_eq!(ccdf.infinite_mass(), 1.0);
        assert_eq!(ccdf.percentile(0.5), None);
    }

    #[test]
    fn two_samples_no_failures() {
        let ccdf = Ccdf::new(vec![1.0, 3.0], 0).unwrap();
        assert_eq!(ccdf.value_at(2.0), 0.5);
        assert_eq!(ccdf.value_at(0.5), 1.0);
        assert_eq!(ccdf.value_at(3.0), 0.0);
        assert_eq!(ccdf.infinite_mass(), 0.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert_eq!(Ccdf::new(vec![], 0), Err(MetricsError::EmptySet));
        let l = ledger();
        assert_eq!(l.ccdf(Some(0)), Err(MetricsError::EmptySet));
    }

    #[test]
    fn ccdf_is_monotone_and_bounded_by_failure_mass() {
        let ccdf = Ccdf::new(vec![0.5, 1.0, 1.0, 2.5, 7.0], 3).unwrap();
        let mut prev = f64::INFINITY;
        for t in [0.0, 0.5, 0.9, 1.0, 2.0, 2.5, 5.0, 7.0, 100.0] {
            let v = ccdf.value_at(t);
            assert!(v <= prev);
            assert!(v >= ccdf.infinite_mass());
            prev = v;
        }
        assert_eq!(ccdf.infinite_mass(), 3.0 / 8.0);
        assert_eq!(ccdf.value_at(1e12), 3.0 / 8.0);
    }

    #[test]
    fn all_completed_summary_row() {
        let mut l = ledger();
        for _ in 0..10 {
            l.record_generated(0);
            l.record_outcome(
                0,
                AttemptOutcome::Completed {
                    completion: 1.0,
                    response: 0.5,
                },
            );
        }
        let rows = l.summarize();
        let overall = &rows[0];
        assert_eq!(overall.completed_pct, 100.0);
        assert_eq!(overall.timed_out_pct, 0.0);
        assert!((overall.total() - 100.0).abs() < 0.1);
    }

    #[test]
    fn all_dropped_summary_row() {
        let mut l = ledger();
        for _ in 0..5 {
            l.record_generated(3);
            l.record_outcome(3, AttemptOutcome::Dropped);
        }
        let rows = l.summarize();
        assert_eq!(rows[0].dropped_pct, 100.0);
        assert_eq!(rows[0].completed_pct, 0.0);
    }

    #[test]
    fn throughput_counts_completions_in_window() {
        let mut l = ledger();
        for i in 0..560 {
            l.record_generated(0);
            l.record_outcome(
                0,
                AttemptOutcome::Completed {
                    completion: 0.2 + (i as f64) * 0.17,
                    response: 0.1,
                },
            );
        }
        // 560 completions spread over slightly less than 100 s.
        assert!((l.throughput(0.0, 100.0) - 5.6).abs() < 1e-9);
        let empty = ledger();
        assert_eq!(empty.throughput(0.0, 100.0), 0.0);
    }

    #[test]
    fn percentile_matches_value_at() {
        let ccdf = Ccdf::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 0).unwrap();
        assert_eq!(ccdf.percentile(0.9), Some(9.0));
        assert!(ccdf.value_at(9.0) <= 0.1 + 1e-12);
    }
}
