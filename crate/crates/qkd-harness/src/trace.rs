//! Independent validation of a run's message trace.
//!
//! The walker recomputes wall time and per-link totals from the trace
//! entries alone — no access to the simulator's internal counters — and
//! checks the physical invariants every entry must satisfy. The harness runs
//! it after every simulation and requires its totals to match the
//! simulator's own accounting, so the two bookkeeping paths audit each
//! other.

use std::collections::BTreeMap;

use crate::scenario::LinkStats;
use crate::sim::{LinkId, Ns, TraceEntry};

/// Totals recomputed from a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSummary {
    /// Arrival time of the last delivered message.
    pub wall_ns: Ns,
    /// Number of trace entries (sent messages).
    pub messages: u64,
    /// Per-link totals.
    pub per_link: BTreeMap<LinkId, LinkStats>,
}

/// Walks `trace`, validating each entry against the link latencies, and
/// returns recomputed totals.
///
/// # Errors
///
/// A description of the first violated invariant: out-of-order sequence
/// numbers, endpoints that do not match the link, a delivery that does not
/// respect the link's latency, or time running backwards.
pub fn verify_trace(
    trace: &[TraceEntry],
    latency_of: impl Fn(LinkId) -> Ns,
) -> Result<TraceSummary, String> {
    let mut per_link: BTreeMap<LinkId, LinkStats> = BTreeMap::new();
    let mut wall = 0;
    for (i, entry) in trace.iter().enumerate() {
        if entry.seq != i as u64 {
            return Err(format!(
                "entry {i} carries sequence number {}, expected {i}",
                entry.seq
            ));
        }
        let (a, b) = entry.link.endpoints();
        if (entry.from, entry.to) != (a, b) && (entry.from, entry.to) != (b, a) {
            return Err(format!(
                "entry {i}: {:?} → {:?} does not ride {}",
                entry.from,
                entry.to,
                entry.link.name()
            ));
        }
        if let Some(delivered) = entry.delivered_at_ns {
            let expected = entry.sent_at_ns + latency_of(entry.link);
            if delivered != expected {
                return Err(format!(
                    "entry {i} on {} delivered at {delivered} ns, expected {expected} ns",
                    entry.link.name()
                ));
            }
            wall = wall.max(delivered);
        }
        let stats = per_link.entry(entry.link).or_default();
        stats.messages += 1;
        stats.bytes += entry.bytes as u64;
    }
    Ok(TraceSummary {
        wall_ns: wall,
        messages: trace.len() as u64,
        per_link,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NodeId;

    fn entry(seq: u64, sent: Ns, delivered: Option<Ns>) -> TraceEntry {
        TraceEntry {
            seq,
            link: LinkId::SaeWan,
            from: NodeId::MasterSae,
            to: NodeId::SlaveSae,
            kind: "record:hello".into(),
            bytes: 10,
            sent_at_ns: sent,
            delivered_at_ns: delivered,
            record: None,
        }
    }

    #[test]
    fn consistent_trace_summarizes() {
        let trace = vec![entry(0, 0, Some(1000)), entry(1, 500, None)];
        let summary = verify_trace(&trace, |_| 1000).expect("consistent");
        assert_eq!(summary.wall_ns, 1000);
        assert_eq!(summary.messages, 2);
        assert_eq!(summary.per_link[&LinkId::SaeWan].bytes, 20);
    }

    #[test]
    fn latency_violation_is_reported() {
        let trace = vec![entry(0, 0, Some(999))];
        let err = verify_trace(&trace, |_| 1000).expect_err("latency violated");
        assert!(err.contains("expected 1000"), "unexpected message: {err}");
    }

    #[test]
    fn sequence_gap_is_reported() {
        let trace = vec![entry(0, 0, Some(1000)), entry(3, 0, Some(1000))];
        assert!(verify_trace(&trace, |_| 1000).is_err());
    }

    #[test]
    fn wrong_endpoints_are_reported() {
        let mut bad = entry(0, 0, Some(1000));
        bad.to = NodeId::Kme2;
        assert!(verify_trace(&[bad], |_| 1000).is_err());
    }
}
