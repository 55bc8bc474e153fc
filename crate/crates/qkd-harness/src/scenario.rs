//! Scenario configuration and the run harness.
//!
//! A [`ScenarioSpec`] describes one deployment — link latencies, each
//! endpoint's negotiation policy, the key-pool size, and an optional link
//! fault — and deserializes from TOML so scenarios can live in files. A
//! [`Harness`] materializes the two KME cores once and then runs any number
//! of handshakes against them, which is how sequential runs exhaust a pool.

use std::path::Path;
use std::sync::Arc;

use qkd_keystore::{KeyStore, KmeId};
use qkd_kme::api::StatusResponse;
use qkd_kme::config::{
    AdminConfig, KmeConfig, ListenConfig, MaterialConfig, PeerConfig, SaeConfig, TlsConfig,
};
use qkd_kme::core::KmeCore;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use tls_qkd::handshake::{MasterConfig, ModePolicy, SlaveConfig};

use crate::nodes::{
    AckStrategy, InertNotifier, MasterNode, SideEnd, SlaveNode, World, WorldOutcome, KME1_ID,
    KME1_SERIAL, KME2_ID, KME2_SERIAL, MASTER_SAE_ID, MASTER_SERIAL, SLAVE_SAE_ID, SLAVE_SERIAL,
};
use crate::sim::{
    ms_to_ns, ns_to_ms, Fault, FaultKind, Interceptor, LinkId, Ns, Passthrough, Sim, TraceEntry,
};
use crate::trace::verify_trace;

/// One-way link latencies in milliseconds.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LatencySpec {
    /// SAE ↔ home-KME links (same site).
    #[serde(default = "default_lan_ms")]
    pub lan_ms: f64,
    /// KME ↔ KME and SAE ↔ SAE links (between sites).
    #[serde(default = "default_wan_ms")]
    pub wan_ms: f64,
}

fn default_lan_ms() -> f64 {
    0.1
}

fn default_wan_ms() -> f64 {
    1.0
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec {
            lan_ms: default_lan_ms(),
            wan_ms: default_wan_ms(),
        }
    }
}

/// An endpoint's negotiation stance, as written in scenario files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// QKD with classical fallback.
    #[default]
    Qkd,
    /// QKD or nothing.
    QkdOnly,
    /// A purely classical endpoint.
    Classical,
}

impl Policy {
    /// The handshake-machine policy this selects.
    pub fn mode_policy(self) -> ModePolicy {
        match self {
            Policy::Qkd => ModePolicy::QkdPreferred,
            Policy::QkdOnly => ModePolicy::QkdOnly,
            Policy::Classical => ModePolicy::ClassicalOnly,
        }
    }
}

/// Per-endpoint scenario settings.
#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    /// Negotiation policy.
    #[serde(default)]
    pub policy: Policy,
}

/// Which perturbation a scenario fault applies.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKindSpec {
    /// Discard one record.
    DropOnce,
    /// Flip one bit of one record.
    CorruptByte {
        /// Byte position within the record.
        offset: usize,
    },
    /// Deliver one record twice.
    DuplicateOnce,
}

/// A one-shot link fault, as written in scenario files, e.g.
/// `fault = { link = "sae_wan", kind = "drop_once", skip = 1 }`.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
pub struct FaultSpec {
    /// Which link misbehaves.
    pub link: LinkId,
    /// Records to let through first.
    #[serde(default)]
    pub skip: u32,
    /// The perturbation.
    #[serde(flatten)]
    pub kind: FaultKindSpec,
}

impl FaultSpec {
    fn to_fault(self) -> Fault {
        Fault {
            link: self.link,
            kind: match self.kind {
                FaultKindSpec::DropOnce => FaultKind::DropOnce,
                FaultKindSpec::CorruptByte { offset } => FaultKind::CorruptByte { offset },
                FaultKindSpec::DuplicateOnce => FaultKind::DuplicateOnce,
            },
            skip: self.skip,
        }
    }
}

/// A complete scenario description.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Seed for all randomness in the run (handshake randoms, key material).
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Keys loaded into each KME's pool for the peer link.
    #[serde(default = "default_pool_keys")]
    pub pool_keys: usize,
    /// Link latencies.
    #[serde(default)]
    pub latency: LatencySpec,
    /// The TLS client.
    #[serde(default)]
    pub master: EndpointSpec,
    /// The TLS server.
    #[serde(default)]
    pub slave: EndpointSpec,
    /// Optional link fault.
    #[serde(default)]
    pub fault: Option<FaultSpec>,
}

fn default_seed() -> u64 {
    7
}

fn default_pool_keys() -> usize {
    8
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: default_seed(),
            pool_keys: default_pool_keys(),
            latency: LatencySpec::default(),
            master: EndpointSpec::default(),
            slave: EndpointSpec::default(),
            fault: None,
        }
    }
}

/// Errors loading a scenario file.
#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    /// The file could not be read.
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    /// The TOML did not parse as a scenario.
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
}

impl ScenarioSpec {
    /// Parses a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<ScenarioSpec, SpecError> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a scenario from a TOML file.
    pub fn load(path: &Path) -> Result<ScenarioSpec, SpecError> {
        ScenarioSpec::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Who drives the master side of a run.
pub enum MasterPlan {
    /// The real handshake machine with this policy.
    Machine(ModePolicy),
    /// The adversarial client.
    Scripted(AckStrategy),
}

/// Full parameters of one run. [`Harness::run_handshake`] builds the honest
/// plan; the attack suite and fault tests build custom ones.
pub struct RunPlan {
    /// Seed for this run's randomness.
    pub seed: u64,
    /// Master driver.
    pub master: MasterPlan,
    /// Slave policy.
    pub slave_policy: ModePolicy,
    /// Certificate serial the slave presents to its KME.
    pub slave_serial: u64,
    /// Wire interceptor (use [`Passthrough`] for none).
    pub interceptor: Box<dyn Interceptor>,
    /// Optional link fault.
    pub fault: Option<FaultSpec>,
}

impl RunPlan {
    /// The honest plan a [`ScenarioSpec`] describes.
    pub fn honest(spec: &ScenarioSpec, seed: u64) -> RunPlan {
        RunPlan {
            seed,
            master: MasterPlan::Machine(spec.master.policy.mode_policy()),
            slave_policy: spec.slave.policy.mode_policy(),
            slave_serial: SLAVE_SERIAL,
            interceptor: Box::new(Passthrough),
            fault: spec.fault,
        }
    }
}

/// Message and byte totals for one link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    /// Messages sent across the link (both directions, delivered or not).
    pub messages: u64,
    /// Wire bytes of those messages.
    pub bytes: u64,
}

/// Everything one run produced.
#[derive(Serialize)]
pub struct ScenarioReport {
    /// Joint result: the established mode when both sides agree, otherwise
    /// `None`.
    pub established_mode: Option<String>,
    /// Master's end, rendered.
    pub master: String,
    /// Slave's end, rendered.
    pub slave: String,
    /// Virtual time at which the last message landed.
    pub wall_time_ms: f64,
    /// Messages sent across all links.
    pub total_messages: u64,
    /// Per-link totals, keyed by link name.
    pub links: BTreeMap<&'static str, LinkStats>,
    /// UUID of the delivered key, when the run reserved one.
    pub key_uuid: Option<String>,
    /// Last non-success KME status the master saw.
    pub master_kme_error: Option<u16>,
    /// Last non-success KME status the slave saw.
    pub slave_kme_error: Option<u16>,
    /// Typed outcome and session state, for programmatic assertions.
    #[serde(skip)]
    pub outcome: WorldOutcome,
    /// The full message trace, in send order.
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    /// Wall time in simulator ticks.
    #[serde(skip)]
    pub wall_time_ns: Ns,
}

impl ScenarioReport {
    /// Whether both sides established the same mode.
    pub fn is_established(&self) -> bool {
        self.established_mode.is_some()
    }

    /// Pretty JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table rendering.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, k: &str, v: String| {
            out.push_str(&format!("{k:<16} {v}\n"));
        };
        push(
            &mut out,
            "result",
            self.established_mode
                .clone()
                .unwrap_or_else(|| "no connection".into()),
        );
        push(&mut out, "master", self.master.clone());
        push(&mut out, "slave", self.slave.clone());
        push(&mut out, "wall time", format!("{:.3} ms", self.wall_time_ms));
        push(&mut out, "messages", self.total_messages.to_string());
        for (name, stats) in &self.links {
            push(
                &mut out,
                name,
                format!("{} msgs, {} bytes", stats.messages, stats.bytes),
            );
        }
        if let Some(uuid) = &self.key_uuid {
            push(&mut out, "key uuid", uuid.clone());
        }
        out
    }
}

/// Two KME cores over seeded mirrored key pools, ready to serve any number
/// of simulated handshakes.
pub struct Harness {
    spec: ScenarioSpec,
    kme1: Arc<KmeCore<InertNotifier>>,
    kme2: Arc<KmeCore<InertNotifier>>,
}

impl Harness {
    /// Builds the deployment: generates `pool_keys` keys of seeded material
    /// and ingests the identical stream into both KMEs, exactly as mirrored
    /// delivery from a key-exchange link would.
    pub fn new(spec: ScenarioSpec) -> Harness {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut material = vec![0u8; spec.pool_keys * qkd_keystore::KEY_SIZE_BYTES];
        rng.fill_bytes(&mut material);

        let store1 = KeyStore::new();
        store1
            .ingest_bytes(KME2_ID, &material)
            .expect("seeded material ingests");
        let store2 = KeyStore::new();
        store2
            .ingest_bytes(KME1_ID, &material)
            .expect("seeded material ingests");

        let kme1 = KmeCore::new(
            &core_config(KME1_ID, KME2_ID, KME2_SERIAL),
            store1,
            InertNotifier,
        );
        let kme2 = KmeCore::new(
            &core_config(KME2_ID, KME1_ID, KME1_SERIAL),
            store2,
            InertNotifier,
        );
        Harness {
            spec,
            kme1: Arc::new(kme1),
            kme2: Arc::new(kme2),
        }
    }

    /// The scenario this harness was built from.
    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Pool status as the master's KME reports it for the slave link.
    pub fn master_pool_status(&self) -> StatusResponse {
        self.kme1
            .status(MASTER_SERIAL, SLAVE_SAE_ID)
            .expect("master SAE is registered")
    }

    /// Runs one honest handshake per the scenario, seeded by `seed`.
    /// Consecutive calls share the KME cores, so each run consumes pool keys
    /// for real.
    pub fn run_handshake(&self, seed: u64) -> ScenarioReport {
        self.run_plan(RunPlan::honest(&self.spec, seed))
    }

    /// Runs one handshake under full control of the plan.
    pub fn run_plan(&self, plan: RunPlan) -> ScenarioReport {
        let lan = ms_to_ns(self.spec.latency.lan_ms);
        let wan = ms_to_ns(self.spec.latency.wan_ms);
        let sim = Sim::new(lan, wan, plan.fault.map(FaultSpec::to_fault), plan.interceptor);

        let master = match plan.master {
            MasterPlan::Machine(policy) => {
                MasterNode::machine(master_config(policy), plan.seed ^ 0x6d61_7374)
            }
            MasterPlan::Scripted(strategy) => {
                MasterNode::scripted(strategy, plan.seed ^ 0x6576_696c)
            }
        };
        let slave = SlaveNode::new(
            SlaveConfig {
                policy: plan.slave_policy,
            },
            plan.slave_serial,
            plan.seed ^ 0x736c_6176,
        );

        let world = World::new(sim, master, slave, self.kme1.clone(), self.kme2.clone());
        let (outcome, sim) = world.run();
        self.report(outcome, sim)
    }

    fn report(&self, outcome: WorldOutcome, sim: Sim) -> ScenarioReport {
        // Re-derive the timing and counters from the trace alone and require
        // agreement with the simulator's own accounting.
        let summary = verify_trace(sim.trace(), |link| sim.latency(link))
            .expect("trace is internally consistent");
        assert_eq!(
            summary.wall_ns,
            sim.wall_time(),
            "trace walk and simulator disagree on wall time"
        );
        assert_eq!(
            summary.messages,
            sim.total_messages(),
            "trace walk and simulator disagree on message count"
        );
        let mut links = BTreeMap::new();
        for link in LinkId::ALL {
            let [fwd, rev] = sim.counters(link);
            let stats = LinkStats {
                messages: fwd.messages + rev.messages,
                bytes: fwd.bytes + rev.bytes,
            };
            assert_eq!(
                summary.per_link.get(&link).copied().unwrap_or_default(),
                stats,
                "trace walk and simulator disagree on {} totals",
                link.name()
            );
            links.insert(link.name(), stats);
        }

        let established_mode = match (&outcome.master_end, &outcome.slave_end) {
            (SideEnd::Established(a), SideEnd::Established(b)) if a == b => {
                Some(match a {
                    tls_qkd::handshake::EstablishedMode::TlsQkd => "TLS-QKD".to_string(),
                    tls_qkd::handshake::EstablishedMode::Classical => "classical".to_string(),
                })
            }
            _ => None,
        };
        let wall = sim.wall_time();
        ScenarioReport {
            established_mode,
            master: outcome.master_end.label(),
            slave: outcome.slave_end.label(),
            wall_time_ms: ns_to_ms(wall),
            total_messages: sim.total_messages(),
            links,
            key_uuid: outcome.key_uuid.map(|u| u.to_string()),
            master_kme_error: outcome.master_kme_error,
            slave_kme_error: outcome.slave_kme_error,
            outcome,
            wall_time_ns: wall,
            trace: sim.into_trace(),
        }
    }
}

fn master_config(policy: ModePolicy) -> MasterConfig {
    match policy {
        ModePolicy::ClassicalOnly => MasterConfig::classical_only(),
        policy => MasterConfig {
            policy,
            slave_sae_id: Some(SLAVE_SAE_ID),
        },
    }
}

fn core_config(own: KmeId, peer: KmeId, peer_serial: u64) -> KmeConfig {
    let unused: std::net::SocketAddr = "127.0.0.1:0".parse().expect("literal address");
    KmeConfig {
        kme_id: own,
        listen: ListenConfig {
            sae: unused,
            kme: unused,
            admin: unused,
        },
        material: MaterialConfig {
            dir: "simulated".into(),
            journal: None,
        },
        tls: TlsConfig {
            cert: "simulated".into(),
            key: "simulated".into(),
            ca: "simulated".into(),
        },
        notify_timeout_ms: 1000,
        peers: vec![PeerConfig {
            kme_id: peer,
            address: "simulated".into(),
            cert_serial: peer_serial,
        }],
        saes: vec![
            SaeConfig {
                sae_id: MASTER_SAE_ID,
                cert_serial: MASTER_SERIAL,
                home_kme: KME1_ID,
            },
            SaeConfig {
                sae_id: SLAVE_SAE_ID,
                cert_serial: SLAVE_SERIAL,
                home_kme: KME2_ID,
            },
        ],
        admins: Vec::<AdminConfig>::new(),
    }
}

/// Builds a fresh deployment for `spec` and runs its handshake once.
pub fn run_handshake_scenario(spec: &ScenarioSpec) -> ScenarioReport {
    Harness::new(spec.clone()).run_handshake(spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_parses_from_toml() {
        let spec = ScenarioSpec::from_toml_str(
            r#"
            seed = 42
            pool_keys = 3

            [latency]
            lan_ms = 0.2
            wan_ms = 5.0

            [master]
            policy = "qkd_only"

            [slave]
            policy = "classical"

            [fault]
            link = "sae_wan"
            kind = "corrupt_byte"
            offset = 9
            skip = 1
            "#,
        )
        .expect("valid scenario");
        assert_eq!(spec.seed, 42);
        assert_eq!(spec.pool_keys, 3);
        assert_eq!(spec.latency.wan_ms, 5.0);
        assert_eq!(spec.master.policy, Policy::QkdOnly);
        assert_eq!(spec.slave.policy, Policy::Classical);
        let fault = spec.fault.expect("fault configured");
        assert_eq!(fault.link, LinkId::SaeWan);
        assert_eq!(fault.skip, 1);
        assert!(matches!(
            fault.kind,
            FaultKindSpec::CorruptByte { offset: 9 }
        ));
    }

    #[test]
    fn empty_scenario_uses_defaults() {
        let spec = ScenarioSpec::from_toml_str("").expect("empty is valid");
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.pool_keys, 8);
        assert_eq!(spec.latency.lan_ms, 0.1);
        assert_eq!(spec.latency.wan_ms, 1.0);
        assert_eq!(spec.master.policy, Policy::Qkd);
        assert!(spec.fault.is_none());
    }

    #[test]
    fn unknown_scenario_keys_are_rejected() {
        assert!(ScenarioSpec::from_toml_str("jitter_ms = 3").is_err());
    }
}
