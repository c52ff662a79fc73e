//! Event calendar: a time-ordered queue with a monotone sequence tiebreaker,
//! so events at equal instants dispatch in schedule order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalendarError {
    #[error("cannot schedule at {requested}: clock is already at {clock}")]
    SchedulePast { requested: f64, clock: f64 },
    #[error("event times must be finite")]
    NonFiniteTime,
}

struct Entry<E> {
    time: f64,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<E> Eq for Entry<E> {}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the earliest event.
        other
            .time
            .partial_cmp(&self.time)
            .expect("event times are finite")
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Calendar<E> {
    heap: BinaryHeap<Entry<E>>,
    next_seq: u64,
    clock: f64,
}

impl<E> Calendar<E> {
    pub fn new() -> Self {
        Calendar {
            heap: BinaryHeap::new(),
            next_seq: 0,
            clock: 0.0,
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(&mut self, time: f64, payload: E) -> Result<(), CalendarError> {
        if !time.is_finite() {
            return Err(CalendarError::NonFiniteTime);
        }
        if time < self.clock {
            return Err(CalendarError::SchedulePast {
                requested: time,
                clock: self.clock,
            });
        }
        self.heap.push(Entry {
            time,
            seq: self.next_seq,
            payload,
        });
        self.next_seq += 1;
        Ok(())
    }

    /// Pops the earliest event and advances the clock to it.
    pub fn next_event(&mut self) -> Option<(f64, E)> {
        let entry = self.heap.pop()?;
        debug_assert!(entry.time >= self.clock, "clock monotonicity");
        self.clock = entry.time;
        Some((entry.time, entry.payload))
    }
}

impl<E> Default for Calendar<E> {
    fn default() -> Self {
        Self::new()
    }
}
