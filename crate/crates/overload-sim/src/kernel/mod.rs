//! Deterministic discrete-event core: the event calendar, seeded random
//! streams, and the run loop that wires clients, server, and metrics.

pub mod calendar;
pub mod engine;
pub mod rng;

pub use calendar::{Calendar, CalendarError};
pub use engine::{
    run, AttemptRecord, AttemptResolution, DecisionRecord, QueueMeta, RunConfig, RunResult,
    Scheme, ServerParams, SimError, SwitchRecord, UtilSample,
};
pub use rng::{RngStreams, Stream};
