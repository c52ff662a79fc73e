//! Discrete-event simulation of web-server overload control.
//!
//! An overloaded e-commerce server drops or starves the very requests that
//! make it money. This crate models such a server — bounded request queues, a
//! limited worker pool, and a processor-shared CPU — together with impatient
//! clients (timeouts, probabilistic retries, session abandonment) and
//! compares service schemes under equal load:
//!
//! - single shared FIFO/LIFO queues, with or without a load-triggered switch;
//! - per-type queues where transaction queues get absolute priority over
//!   browsing queues, queue rank is the utility-weighted backlog `N_i * U_i`,
//!   and browsing queues flip to LIFO while CPU utilization sits above a
//!   hysteresis threshold pair.
//!
//! Utilities come from a Markov-chain session model: each page type is
//! weighted by the probability that a request of that type eventually leads
//! to a completed final transaction.
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release --example workload_model       # chain, absorption probabilities, utilities
//! cargo run --release --example session_traces       # trace pools and their statistics
//! cargo run --release --example calibrate_capacity   # find the rate that saturates the server
//! cargo run --release --example fifo_vs_lifo         # single-queue schemes under overload
//! cargo run --release --example ecommerce_schemes    # SQ vs 8Q-AF vs 8Q-LIFO-Pri
//! cargo run --release --example hysteresis_trace     # discipline switches around the thresholds
//! cargo run --release --example response_ccdf        # unconditional response-time tails
//! cargo run --release --example paired_seeds         # common random numbers across schemes
//! ```
//!
//! The `overload-sim` binary drives whole scenario files:
//!
//! ```text
//! overload-sim simulate scenarios/e2.scenario --out out/e2
//! overload-sim calibrate scenarios/e2.scenario
//! overload-sim report out/e2
//! ```

pub mod client;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod server;
pub mod workload;

pub use client::{RetryPolicy, SessionInstance, ThinkDistribution, TimeoutModel};
pub use kernel::{run, RunConfig, RunResult, Scheme, ServerParams, SimError};
pub use metrics::{Ccdf, MetricsError, OutcomeLedger, SummaryRow, TypeCounters};
pub use server::{Discipline, PhaseDistribution, PhaseProfile};
pub use workload::{
    default_retail_model, single_request_model, ModelError, RequestClass, RequestType,
    SessionModel, SessionTrace, UtilityTable,
};
