//! Bounded request queues, the dynamic-priority selector, and the
//! FIFO/LIFO hysteresis controller for browsing queues.
//!
//! Queue priority at any instant is `N_i * U_i` (pending count times
//! utility). Transaction utilities always dominate browsing utilities, and
//! ties break toward the earlier queue in bank order; banks order their
//! queues `Tr-k .. Tr-1` first, then `Br-1 .. Br-m`, so a waiting transaction
//! always beats every browsing queue.

use crate::workload::{RequestClass, SessionModel, UtilityTable};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    Fifo,
    Lifo,
}

impl std::fmt::Display for Discipline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Discipline::Fifo => write!(f, "FIFO"),
            Discipline::Lifo => write!(f, "LIFO"),
        }
    }
}

/// A queued attempt: the engine-side id plus its type for accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedRequest {
    pub attempt: u64,
    pub type_index: usize,
}

#[derive(Debug, Clone)]
pub struct Queue {
    pub label: String,
    pub accepted_types: Vec<usize>,
    pub capacity: usize,
    pub utility: f64,
    pub class: RequestClass,
    /// LIFO ever applies only to queues holding nothing but browsing work.
    pub lifo_eligible: bool,
    buffer: VecDeque<QueuedRequest>,
}

impl Queue {
    pub fn pending(&self) -> usize {
        self.buffer.len()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("no queue accepts request type {0}")]
    NoMatchingQueue(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted(usize),
    Dropped,
}

/// What the selector dequeued and why; enough to replay the decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub queue: usize,
    pub request: QueuedRequest,
    pub dynamic_priority: f64,
    pub from_tail: bool,
}

#[derive(Debug, Clone)]
pub struct QueueBank {
    pub queues: Vec<Queue>,
    /// type index -> queue index
    by_type: Vec<usize>,
}

impl QueueBank {
    /// One queue accepting every type, FIFO head/tail semantics decided by
    /// the caller's discipline. Used by the single-queue schemes.
    pub fn single(model: &SessionModel, capacity: usize) -> Self {
        let all_browsing = model
            .types
            .iter()
            .all(|t| t.class == RequestClass::Browsing);
        let queue = Queue {
            label: "ALL".to_string(),
            accepted_types: (0..model.len()).collect(),
            capacity,
            utility: 1.0,
            class: if all_browsing {
                RequestClass::Browsing
            } else {
                RequestClass::Transaction
            },
            lifo_eligible: all_browsing,
            buffer: VecDeque::new(),
        };
        QueueBank {
            queues: vec![queue],
            by_type: vec![0; model.len()],
        }
    }

    /// One queue per type, ordered for tie-breaking: transaction queues from
    /// the final stage backward, then browsing queues in type order.
    pub fn per_type(
        model: &SessionModel,
        utilities: &UtilityTable,
        browsing_capacity: usize,
        transaction_capacity: usize,
    ) -> Self {
        let mut order: Vec<usize> = (0..model.len())
            .filter(|&i| model.types[i].class == RequestClass::Transaction)
            .rev()
            .collect();
        order.extend((0..model.len()).filter(|&i| model.types[i].class == RequestClass::Browsing));
        let mut by_type = vec![0; model.len()];
        let queues: Vec<Queue> = order
            .iter()
            .enumerate()
            .map(|(qi, &ti)| {
                by_type[ti] = qi;
                let t = &model.types[ti];
                Queue {
                    label: t.label.clone(),
                    accepted_types: vec![ti],
                    capacity: match t.class {
                        RequestClass::Browsing => browsing_capacity,
                        RequestClass::Transaction => transaction_capacity,
                    },
                    utility: utilities.utilities[ti],
                    class: t.class,
                    lifo_eligible: t.class == RequestClass::Browsing,
                    buffer: VecDeque::new(),
                }
            })
            .collect();
        QueueBank { queues, by_type }
    }

    pub fn total_pending(&self) -> usize {
        self.queues.iter().map(Queue::pending).sum()
    }

    pub fn pending_counts(&self) -> Vec<usize> {
        self.queues.iter().map(Queue::pending).collect()
    }

    /// Appends to the matching queue's tail, or drops when full. A drop is a
    /// hard failure: the request is never retried.
    pub fn enqueue(&mut self, req: QueuedRequest) -> Result<EnqueueOutcome, QueueError> {
        let qi = *self
            .by_type
            .get(req.type_index)
            .ok_or(QueueError::NoMatchingQueue(req.type_index))?;
        let queue = &mut self.queues[qi];
        if queue.pending() >= queue.capacity {
            Ok(EnqueueOutcome::Dropped)
        } else {
            queue.buffer.push_back(req);
            Ok(EnqueueOutcome::Accepted(qi))
        }
    }

    /// Dequeues from the queue maximizing `N_i * U_i`, head under FIFO and
    /// tail under LIFO (LIFO only for browsing queues while the browsing
    /// policy says so). Returns `None` when every buffer is empty.
    ///
    /// Transaction queues take structural precedence: browsing queues are
    /// only considered when every transaction queue is empty. With the
    /// shipped capacities and utilities that is exactly what the argmax with
    /// the transactions-first tie-break yields (a full browsing queue at
    /// worst ties the smallest transaction utility), stated here directly so
    /// float rounding in derived utilities cannot flip the boundary case.
    pub fn select_next(&mut self, browsing_policy: Discipline) -> Option<Selection> {
        let mut best: Option<(usize, f64)> = None;
        for class in [RequestClass::Transaction, RequestClass::Browsing] {
            for (qi, queue) in self.queues.iter().enumerate() {
                if queue.class != class || queue.pending() == 0 {
                    continue;
                }
                let dp = queue.pending() as f64 * queue.utility;
                match best {
                    Some((_, best_dp)) if dp <= best_dp => {}
                    _ => best = Some((qi, dp)),
                }
            }
            if best.is_some() {
                break;
            }
        }
        let (qi, dp) = best?;
        let queue = &mut self.queues[qi];
        let from_tail = queue.lifo_eligible && browsing_policy == Discipline::Lifo;
        let request = if from_tail {
            queue.buffer.pop_back()
        } else {
            queue.buffer.pop_front()
        }
        .expect("selected queue is nonempty");
        Some(Selection {
            queue: qi,
            request,
            dynamic_priority: dp,
            from_tail,
        })
    }
}

/// Pure hysteresis step: switches to LIFO strictly above the upper threshold
/// and back to FIFO strictly below the lower one; anywhere inside the band
/// the policy is left alone.
pub fn hysteresis_step(policy: Discipline, util: f64, upper: f64, lower: f64) -> Discipline {
    match policy {
        Discipline::Fifo if util > upper => Discipline::Lifo,
        Discipline::Lifo if util < lower => Discipline::Fifo,
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    /// Browsing queues always serve FIFO.
    ForcedFifo,
    /// Browsing queues always serve LIFO.
    ForcedLifo,
    /// FIFO under normal load, LIFO while the CPU is saturated.
    Hysteresis,
}

/// A policy switch observed by the controller, for the switch log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySwitch {
    pub from: Discipline,
    pub to: Discipline,
    pub utilization: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DisciplineController {
    pub upper_threshold: f64,
    pub lower_threshold: f64,
    pub mode: ControllerMode,
    policy: Discipline,
}

impl DisciplineController {
    pub fn new(mode: ControllerMode, upper_threshold: f64, lower_threshold: f64) -> Self {
        assert!(lower_threshold < upper_threshold);
        let policy = match mode {
            ControllerMode::ForcedLifo => Discipline::Lifo,
            _ => Discipline::Fifo,
        };
        DisciplineController {
            upper_threshold,
            lower_threshold,
            mode,
            policy,
        }
    }

    pub fn policy(&self) -> Discipline {
        self.policy
    }

    /// Feeds a utilization measurement through the hysteresis rule. Forced
    /// modes never switch. Transaction queues are unaffected either way: they
    /// always serve FIFO.
    pub fn observe(&mut self, utilization: f64) -> Option<PolicySwitch> {
        if self.mode != ControllerMode::Hysteresis {
            return None;
        }
        let next = hysteresis_step(
            self.policy,
            utilization,
            self.upper_threshold,
            self.lower_threshold,
        );
        if next != self.policy {
            let switch = PolicySwitch {
                from: self.policy,
                to: next,
                utilization,
            };
            self.policy = next;
            Some(switch)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{default_retail_model, single_request_model};

    fn retail_bank() -> QueueBank {
        let model = default_retail_model();
        let q = model.reach_probabilities().unwrap();
        let table = UtilityTable::derive(&model, &q, 1000.0, 5000.0).unwrap();
        QueueBank::per_type(&model, &table, 50, 25)
    }

    fn req(attempt: u64, type_index: usize) -> QueuedRequest {
        QueuedRequest {
            attempt,
            type_index,
        }
    }

    #[test]
    fn browsing_queue_drops_at_fifty() {
        let mut bank = retail_bank();
        for i in 0..50 {
            assert!(matches!(
                bank.enqueue(req(i, 0)),
                Ok(EnqueueOutcome::Accepted(_))
            ));
        }
        assert_eq!(bank.enqueue(req(50, 0)), Ok(EnqueueOutcome::Dropped));
    }

    #[test]
    fn transaction_queue_drops_at_twenty_five() {
        let mut bank = retail_bank();
        for i in 0..25 {
            assert!(matches!(
                bank.enqueue(req(i, 7)),
                Ok(EnqueueOutcome::Accepted(_))
            ));
        }
        assert_eq!(bank.enqueue(req(25, 7)), Ok(EnqueueOutcome::Dropped));
    }

    #[test]
    fn single_queue_drops_at_hundred() {
        let model = default_retail_model();
        let mut bank = QueueBank::single(&model, 100);
        for i in 0..100 {
            assert!(matches!(
                bank.enqueue(req(i, (i % 8) as usize)),
                Ok(EnqueueOutcome::Accepted(0))
            ));
        }
        assert_eq!(bank.enqueue(req(100, 0)), Ok(EnqueueOutcome::Dropped));
    }

    #[test]
    fn dynamic_priority_picks_largest_product() {
        // Br-2 with 10 pending (U=22 -> 220) loses to Br-4 with 5 (U=73 -> 365).
        let mut bank = retail_bank();
        for i in 0..10 {
            bank.enqueue(req(i, 1)).unwrap();
        }
        for i in 10..15 {
            bank.enqueue(req(i, 3)).unwrap();
        }
        let sel = bank.select_next(Discipline::Fifo).unwrap();
        assert_eq!(sel.request.type_index, 3);
        assert!((sel.dynamic_priority - 365.0).abs() < 1e-9);
    }

    #[test]
    fn waiting_transaction_beats_full_browsing_queue() {
        let mut bank = retail_bank();
        for i in 0..50 {
            bank.enqueue(req(i, 0)).unwrap(); // Br-1: DP = 50 * 27 = 1350
        }
        bank.enqueue(req(99, 7)).unwrap(); // one Tr-4: DP = 5000
        let sel = bank.select_next(Discipline::Fifo).unwrap();
        assert_eq!(sel.request.type_index, 7);
    }

    #[test]
    fn dp_tie_between_classes_goes_to_the_transaction() {
        // 50 * 73 = 3650 exactly equals 1 * 3650: the boundary case where a
        // full browsing queue reaches the smallest transaction priority. The
        // transaction must still win.
        let mut bank = retail_bank();
        for i in 0..50 {
            bank.enqueue(req(i, 3)).unwrap(); // Br-4
        }
        bank.enqueue(req(99, 4)).unwrap(); // Tr-1
        let sel = bank.select_next(Discipline::Fifo).unwrap();
        assert_eq!(sel.request.type_index, 4);
    }

    #[test]
    fn lifo_pops_the_newest_browsing_request() {
        let mut bank = retail_bank();
        for i in 1..=3 {
            bank.enqueue(req(i, 0)).unwrap();
        }
        let sel = bank.select_next(Discipline::Lifo).unwrap();
        assert_eq!(sel.request.attempt, 3);
        assert!(sel.from_tail);
        let sel = bank.select_next(Discipline::Fifo).unwrap();
        assert_eq!(sel.request.attempt, 1);
        assert!(!sel.from_tail);
    }

    #[test]
    fn transactions_serve_fifo_even_under_lifo_policy() {
        let mut bank = retail_bank();
        for i in 1..=3 {
            bank.enqueue(req(i, 7)).unwrap();
        }
        let sel = bank.select_next(Discipline::Lifo).unwrap();
        assert_eq!(sel.request.attempt, 1);
        assert!(!sel.from_tail);
    }

    #[test]
    fn empty_bank_is_idle() {
        let mut bank = retail_bank();
        assert_eq!(bank.select_next(Discipline::Fifo), None);
    }

    #[test]
    fn single_queue_for_browsing_only_model_is_lifo_eligible() {
        let model = single_request_model(290.0);
        let bank = QueueBank::single(&model, 50);
        assert!(bank.queues[0].lifo_eligible);
        let mixed = QueueBank::single(&default_retail_model(), 100);
        assert!(!mixed.queues[0].lifo_eligible);
    }

    #[test]
    fn hysteresis_switches_on_the_published_thresholds() {
        let mut ctrl = DisciplineController::new(ControllerMode::Hysteresis, 0.99, 0.95);
        assert_eq!(ctrl.policy(), Discipline::Fifo);
        let s = ctrl.observe(0.995).unwrap();
        assert_eq!((s.from, s.to), (Discipline::Fifo, Discipline::Lifo));
        // Inside the band: stays LIFO.
        assert_eq!(ctrl.observe(0.97), None);
        assert_eq!(ctrl.policy(), Discipline::Lifo);
        let s = ctrl.observe(0.94).unwrap();
        assert_eq!((s.from, s.to), (Discipline::Lifo, Discipline::Fifo));
    }

    #[test]
    fn threshold_boundaries_do_not_switch() {
        // Exactly at a threshold is not "above"/"below": no transition.
        assert_eq!(
            hysteresis_step(Discipline::Fifo, 0.99, 0.99, 0.95),
            Discipline::Fifo
        );
        assert_eq!(
            hysteresis_step(Discipline::Lifo, 0.95, 0.99, 0.95),
            Discipline::Lifo
        );
    }

    #[test]
    fn forced_modes_never_switch() {
        let mut fifo = DisciplineController::new(ControllerMode::ForcedFifo, 0.99, 0.95);
        let mut lifo = DisciplineController::new(ControllerMode::ForcedLifo, 0.99, 0.95);
        for util in [0.0, 0.5, 0.96, 1.0] {
            assert_eq!(fifo.observe(util), None);
            assert_eq!(lifo.observe(util), None);
        }
        assert_eq!(fifo.policy(), Discipline::Fifo);
        assert_eq!(lifo.policy(), Discipline::Lifo);
    }
}
