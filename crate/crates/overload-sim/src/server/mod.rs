//! The server side: bounded queues, the dynamic-priority selector, the
//! FIFO/LIFO hysteresis controller, service demands, and the
//! processor-shared CPU with its utilization window.

pub mod cpu;
pub mod demand;
pub mod queue;

pub use cpu::{Cpu, WorkerPool};
pub use demand::{PhaseDistribution, PhaseKind, PhaseProfile, ProfileError, ServiceDemand};
pub use queue::{
    hysteresis_step, ControllerMode, Discipline, DisciplineController, EnqueueOutcome,
    PolicySwitch, Queue, QueueBank, QueueError, QueuedRequest, Selection,
};
