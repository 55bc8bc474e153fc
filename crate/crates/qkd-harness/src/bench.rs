//! Latency benchmark: TLS-QKD versus classical over the same links.
//!
//! Each trial builds a fresh deployment and runs one handshake to
//! completion, once in QKD mode and once classical, on identical link
//! latencies. The virtual clock makes the numbers exact: a trial's wall
//! time is a function of latencies and processing charges only, so repeated
//! trials agree to the nanosecond and the spread collapses to zero. The
//! trials still run — each with its own seed and fresh pools — so the
//! benchmark doubles as a determinism check: any spread in the stats means
//! hidden nondeterminism crept in.

use serde::{Deserialize, Serialize};

use crate::scenario::{EndpointSpec, LatencySpec, Policy, ScenarioSpec};
use crate::sim::ns_to_ms;

/// Fewest trials a benchmark accepts; below this the min/max spread says
/// nothing.
pub const MIN_TRIALS: u32 = 10;

/// Benchmark parameters.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// SAE ↔ KME one-way latency, milliseconds.
    #[serde(default = "default_lan_ms")]
    pub lan_ms: f64,
    /// Inter-site one-way latency, milliseconds.
    #[serde(default = "default_wan_ms")]
    pub wan_ms: f64,
    /// Handshakes per mode.
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Base seed; trial `i` runs with `seed + i`.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_lan_ms() -> f64 {
    0.1
}

fn default_wan_ms() -> f64 {
    1.0
}

fn default_trials() -> u32 {
    MIN_TRIALS
}

fn default_seed() -> u64 {
    7
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            lan_ms: default_lan_ms(),
            wan_ms: default_wan_ms(),
            trials: default_trials(),
            seed: default_seed(),
        }
    }
}

/// Wall-time statistics for one mode, in milliseconds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModeStats {
    /// Mean across trials.
    pub mean_ms: f64,
    /// Fastest trial.
    pub min_ms: f64,
    /// Slowest trial.
    pub max_ms: f64,
    /// Messages per handshake (identical across trials by construction).
    pub messages: u64,
}

fn stats(samples_ns: &[u64], messages: u64) -> ModeStats {
    let min = *samples_ns.iter().min().expect("at least one trial");
    let max = *samples_ns.iter().max().expect("at least one trial");
    let mean = samples_ns.iter().sum::<u64>() as f64 / samples_ns.len() as f64;
    ModeStats {
        mean_ms: mean / 1_000_000.0,
        min_ms: ns_to_ms(min),
        max_ms: ns_to_ms(max),
        messages,
    }
}

/// The benchmark's findings.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    /// Trials per mode.
    pub trials: u32,
    /// Configured LAN latency.
    pub lan_ms: f64,
    /// Configured WAN latency.
    pub wan_ms: f64,
    /// TLS-QKD handshake timings.
    pub qkd: ModeStats,
    /// Classical handshake timings.
    pub classical: ModeStats,
    /// `qkd.mean_ms / classical.mean_ms`.
    pub ratio: f64,
}

impl BenchReport {
    /// Pretty JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table rendering.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "latencies        lan {:.3} ms, wan {:.3} ms ({} trials per mode)\n",
            self.lan_ms, self.wan_ms, self.trials
        ));
        out.push_str(&format!(
            "{:<12} {:>10} {:>10} {:>10} {:>10}\n",
            "mode", "mean ms", "min ms", "max ms", "messages"
        ));
        for (name, s) in [("TLS-QKD", &self.qkd), ("classical", &self.classical)] {
            out.push_str(&format!(
                "{:<12} {:>10.3} {:>10.3} {:>10.3} {:>10}\n",
                name, s.mean_ms, s.min_ms, s.max_ms, s.messages
            ));
        }
        out.push_str(&format!("ratio            {:.3}\n", self.ratio));
        out
    }
}

/// Benchmark failures.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    /// Too few trials requested.
    #[error("benchmark needs at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(u32),
    /// A handshake that should have established did not.
    #[error("{mode} trial {trial} did not establish: master {master}, slave {slave}")]
    TrialFailed {
        /// Which mode failed.
        mode: &'static str,
        /// Zero-based trial index.
        trial: u32,
        /// Master's end.
        master: String,
        /// Slave's end.
        slave: String,
    },
}

fn scenario(spec: &BenchSpec, policy: Policy, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        seed,
        // One key suffices: every trial gets a fresh deployment.
        pool_keys: 2,
        latency: LatencySpec {
            lan_ms: spec.lan_ms,
            wan_ms: spec.wan_ms,
        },
        master: EndpointSpec { policy },
        slave: EndpointSpec { policy },
        fault: None,
    }
}

/// Runs `spec.trials` handshakes per mode and reports timings.
///
/// # Errors
///
/// [`BenchError::TooFewTrials`] below [`MIN_TRIALS`];
/// [`BenchError::TrialFailed`] when any handshake fails to establish in the
/// expected mode.
pub fn run_latency_benchmark(spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    if spec.trials < MIN_TRIALS {
        return Err(BenchError::TooFewTrials(spec.trials));
    }
    let mut timings = Vec::new();
    for (mode, policy, expected) in [
        ("TLS-QKD", Policy::Qkd, "TLS-QKD"),
        ("classical", Policy::Classical, "classical"),
    ] {
        let mut samples = Vec::with_capacity(spec.trials as usize);
        let mut messages = 0;
        for trial in 0..spec.trials {
            let scenario = scenario(spec, policy, spec.seed.wrapping_add(u64::from(trial)));
            let report = crate::scenario::run_handshake_scenario(&scenario);
            if report.established_mode.as_deref() != Some(expected) {
                return Err(BenchError::TrialFailed {
                    mode,
                    trial,
                    master: report.master,
                    slave: report.slave,
                });
            }
            samples.push(report.wall_time_ns);
            messages = report.total_messages;
        }
        timings.push(stats(&samples, messages));
    }
    let classical = timings.pop().expect("two modes timed");
    let qkd = timings.pop().expect("two modes timed");
    Ok(BenchReport {
        trials: spec.trials,
        lan_ms: spec.lan_ms,
        wan_ms: spec.wan_ms,
        ratio: qkd.mean_ms / classical.mean_ms,
        qkd,
        classical,
    })
}
