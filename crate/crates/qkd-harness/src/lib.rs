//! Deterministic network harness for the TLS-QKD stack.
//!
//! Everything above the wire is real: the SAE endpoints run the production
//! handshake machines, and the KME nodes answer through the production
//! service core — registration checks, key reservation, peer activation,
//! one-time delivery. Only the network is simulated: a discrete-event
//! scheduler with a virtual nanosecond clock carries every HTTP exchange and
//! TLS record as an explicit, latency-delayed message.
//!
//! That buys three things sockets cannot offer:
//!
//! * **Determinism** — a scenario seed fixes every byte and every timestamp,
//!   so two runs of the same scenario produce identical traces.
//! * **Honest timing** — wall-clock comparisons between TLS-QKD and
//!   classical handshakes measure protocol structure (message counts, trips,
//!   processing charges), not host scheduling noise.
//! * **A seat for the adversary** — interceptors rewrite traffic in flight
//!   and scripted endpoints speak the wire format without following the
//!   rules, which is how the attack suite stages its scenarios.
//!
//! Entry points: [`run_handshake_scenario`] for one configured run,
//! [`Harness`] for sequences against shared key pools,
//! [`run_latency_benchmark`] for mode comparisons, and [`run_attack_suite`]
//! for the adversarial suite.

#![warn(missing_docs)]

pub mod attack;
pub mod bench;
pub mod nodes;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use attack::{run_attack_suite, AttackReport, AttackRow};
pub use bench::{run_latency_benchmark, BenchError, BenchReport, BenchSpec, ModeStats};
pub use nodes::{AckStrategy, SideEnd, WorldOutcome};
pub use scenario::{
    run_handshake_scenario, FaultKindSpec, FaultSpec, Harness, LatencySpec, MasterPlan, Policy,
    RunPlan, ScenarioReport, ScenarioSpec,
};
pub use sim::{Fault, FaultKind, Interceptor, LinkId, NodeId, Passthrough, Payload, TraceEntry};
pub use trace::{verify_trace, TraceSummary};
