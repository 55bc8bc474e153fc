//! Discrete-event network simulator for a four-node deployment.
//!
//! The simulated topology is the smallest one that exercises every protocol
//! leg: a master SAE and its home KME on one site, a slave SAE and its home
//! KME on another, a WAN between the two KMEs and a WAN between the two SAEs.
//!
//! ```text
//!   MasterSae ––MasterLan––  Kme1
//!       |                     |
//!    SaeWan                 KmeWan
//!       |                     |
//!   SlaveSae ––SlaveLan––   Kme2
//! ```
//!
//! Time is a virtual nanosecond counter; nothing sleeps. Every message
//! crossing a link is timestamped, counted, and appended to a trace, so a run
//! is fully reproducible and auditable after the fact. Processing costs are
//! charged to the sending node's ready-time: a node that performs an
//! expensive operation dispatches its next message later, which is how
//! cryptographic work shows up in the wall-clock numbers.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use qkd_keystore::{KeyMaterial, KeyUuid, SaeId};
use qkd_kme::api::{ActivationMsg, KeyContainer, KeyEntry, SaeInfoMe};
use serde::Serialize;
use tls_qkd::consts::{REC_ALERT, REC_APPLICATION_DATA, REC_CHALLENGE_ACK, REC_HANDSHAKE};
use tls_qkd::kme::KmeReply;
use tls_qkd::wire::peek_content_type;

/// Virtual time in nanoseconds.
pub type Ns = u64;

/// Converts milliseconds (as configured) to the simulator's tick unit.
pub fn ms_to_ns(ms: f64) -> Ns {
    (ms * 1_000_000.0).round() as Ns
}

/// Converts virtual time back to milliseconds for reports.
pub fn ns_to_ms(ns: Ns) -> f64 {
    ns as f64 / 1_000_000.0
}

/// Round-trips needed to open a fresh HTTPS connection (TCP + TLS 1.3)
/// before the first request can depart. Charged as pure delay on the opening
/// message; the setup packets themselves are not counted as protocol
/// messages.
pub const CONN_SETUP_RTTS: u64 = 2;

/// Cost of one public-key operation bundle (ephemeral agreement plus
/// certificate-chain verification), charged on each asymmetric flight of a
/// classical handshake. Representative of RSA/ECDSA chains on server-class
/// hardware.
pub const ASYM_OP_NS: Ns = 1_000_000;

/// Cost of one symmetric operation bundle (an AEAD seal or open plus nonce
/// bookkeeping), charged when a side builds or answers the key-confirmation
/// challenge.
pub const SYM_OP_NS: Ns = 50_000;

/// Estimated HTTP framing overhead (request/status line plus headers) per
/// KME API message. Only byte accounting uses this; timing is latency-based.
const HTTP_OVERHEAD: usize = 180;

/// The four simulated endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    /// TLS client; initiates key reservation.
    MasterSae,
    /// TLS server; retrieves the reserved key by id.
    SlaveSae,
    /// The master SAE's home KME.
    Kme1,
    /// The slave SAE's home KME.
    Kme2,
}

/// The four links of the topology.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum LinkId {
    /// Master SAE ↔ KME 1 (site-local).
    MasterLan,
    /// Slave SAE ↔ KME 2 (site-local).
    SlaveLan,
    /// KME 1 ↔ KME 2 (inter-site).
    KmeWan,
    /// Master SAE ↔ slave SAE (inter-site; carries the TLS records).
    SaeWan,
}

impl LinkId {
    /// All links, in a stable order.
    pub const ALL: [LinkId; 4] = [
        LinkId::MasterLan,
        LinkId::SlaveLan,
        LinkId::KmeWan,
        LinkId::SaeWan,
    ];

    /// The two endpoints of this link.
    pub fn endpoints(self) -> (NodeId, NodeId) {
        match self {
            LinkId::MasterLan => (NodeId::MasterSae, NodeId::Kme1),
            LinkId::SlaveLan => (NodeId::SlaveSae, NodeId::Kme2),
            LinkId::KmeWan => (NodeId::Kme1, NodeId::Kme2),
            LinkId::SaeWan => (NodeId::MasterSae, NodeId::SlaveSae),
        }
    }

    /// The link connecting `a` and `b`, if they are adjacent.
    pub fn between(a: NodeId, b: NodeId) -> Option<LinkId> {
        LinkId::ALL
            .into_iter()
            .find(|l| l.endpoints() == (a, b) || l.endpoints() == (b, a))
    }

    /// Stable text name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            LinkId::MasterLan => "master_lan",
            LinkId::SlaveLan => "slave_lan",
            LinkId::KmeWan => "kme_wan",
            LinkId::SaeWan => "sae_wan",
        }
    }
}

/// A KME API request as it crosses a LAN link. The variants mirror the
/// service's SAE-facing routes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KmeCall {
    /// `GET /api/v1/sae/info/me`.
    OwnSaeId,
    /// `POST /api/v1/keys/{slave}/enc_keys`.
    NewKey {
        /// Target slave SAE.
        slave_sae_id: SaeId,
    },
    /// `POST /api/v1/keys/{master}/dec_keys`.
    KeyById {
        /// SAE that reserved the key.
        master_sae_id: SaeId,
        /// Which key.
        key_uuid: KeyUuid,
    },
}

/// Everything that can cross a link.
#[derive(Debug, Clone)]
pub enum Payload {
    /// A complete TLS record (SAE ↔ SAE).
    Record(Vec<u8>),
    /// A KME API request (SAE → KME). `caller_serial` stands in for the
    /// client-certificate serial mutual TLS would present.
    KmeCall {
        /// Certificate serial the caller authenticates with.
        caller_serial: u64,
        /// The requested operation.
        call: KmeCall,
    },
    /// A KME API response (KME → SAE).
    KmeAnswer {
        /// HTTP status the service would have returned.
        status: u16,
        /// Decoded body.
        reply: KmeReply,
    },
    /// Key activation (reserving KME → peer KME).
    Activate(ActivationMsg),
    /// Activation acknowledgement (peer KME → reserving KME).
    ActivateAck {
        /// HTTP status of the activation call.
        status: u16,
    },
}

impl Payload {
    /// Short label for traces and reports.
    pub fn kind(&self) -> String {
        match self {
            Payload::Record(bytes) => match peek_content_type(bytes) {
                Ok(REC_HANDSHAKE) => "record:hello".into(),
                Ok(REC_CHALLENGE_ACK) => "record:challenge-ack".into(),
                Ok(REC_ALERT) => "record:alert".into(),
                Ok(REC_APPLICATION_DATA) => "record:app-data".into(),
                _ => "record:other".into(),
            },
            Payload::KmeCall { call, .. } => match call {
                KmeCall::OwnSaeId => "kme:get-own-id".into(),
                KmeCall::NewKey { .. } => "kme:reserve-key".into(),
                KmeCall::KeyById { .. } => "kme:key-by-id".into(),
            },
            Payload::KmeAnswer { status, .. } => format!("kme:reply({status})"),
            Payload::Activate(_) => "kme:activate".into(),
            Payload::ActivateAck { status } => format!("kme:activate-ack({status})"),
        }
    }

    /// Bytes this message would occupy on the wire. Records are exact;
    /// KME API messages are their JSON bodies (plus path for requests)
    /// under a fixed HTTP framing estimate.
    pub fn wire_len(&self) -> usize {
        match self {
            Payload::Record(bytes) => bytes.len(),
            Payload::KmeCall { call, .. } => {
                let route = match call {
                    KmeCall::OwnSaeId => "/api/v1/sae/info/me".len(),
                    KmeCall::NewKey { slave_sae_id } => {
                        format!("/api/v1/keys/{slave_sae_id}/enc_keys").len()
                            + br#"{"number":1}"#.len()
                    }
                    KmeCall::KeyById {
                        master_sae_id,
                        key_uuid,
                    } => {
                        format!("/api/v1/keys/{master_sae_id}/dec_keys").len()
                            + dec_keys_body(key_uuid).len()
                    }
                };
                HTTP_OVERHEAD + route
            }
            Payload::KmeAnswer { reply, .. } => {
                let body = match reply {
                    KmeReply::OwnSaeId(id) => json_len(&SaeInfoMe { sae_id: *id }),
                    KmeReply::NewKey { key_uuid, material } => {
                        json_len(&container(key_uuid, material))
                    }
                    KmeReply::KeyMaterial(material) => {
                        // The container echoes the UUID; its length is what
                        // matters, so any UUID stands in.
                        json_len(&container(&KeyUuid::from_bytes([0; 16]), material))
                    }
                    KmeReply::Failed(failure) => {
                        format!(r#"{{"message":{:?}}}"#, failure.to_string()).len()
                    }
                };
                HTTP_OVERHEAD + body
            }
            Payload::Activate(msg) => HTTP_OVERHEAD + json_len(msg),
            Payload::ActivateAck { .. } => HTTP_OVERHEAD,
        }
    }
}

fn json_len<T: Serialize>(value: &T) -> usize {
    serde_json::to_vec(value).map(|v| v.len()).unwrap_or(0)
}

fn dec_keys_body(uuid: &KeyUuid) -> String {
    format!(r#"{{"key_IDs":[{{"key_ID":"{uuid}"}}]}}"#)
}

fn container(uuid: &KeyUuid, material: &KeyMaterial) -> KeyContainer {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;
    KeyContainer {
        keys: vec![KeyEntry {
            key_id: uuid.to_string(),
            key: BASE64.encode(material),
        }],
    }
}

/// A single one-shot link perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Silently discard one record.
    DropOnce,
    /// Flip the low bit of the byte at `offset` in one record.
    CorruptByte {
        /// Byte position within the record (clamped to its length).
        offset: usize,
    },
    /// Deliver one record twice.
    DuplicateOnce,
}

/// A fault armed on one link. It triggers on the first `Record` payload
/// crossing the link after `skip` records have passed, then disarms.
/// Non-record payloads never trigger faults: the KME legs ride HTTPS over
/// TCP, whose own retransmission hides single-message perturbations.
#[derive(Debug, Clone, Copy)]
pub struct Fault {
    /// Which link.
    pub link: LinkId,
    /// Perturbation to apply.
    pub kind: FaultKind,
    /// Records to let through unharmed first.
    pub skip: u32,
}

/// Per-direction tally of messages and bytes on one link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkCounters {
    /// Messages sent (delivered or not).
    pub messages: u64,
    /// Total wire bytes of those messages.
    pub bytes: u64,
}

/// One send event, as recorded in the trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    /// Position in global send order (0-based).
    pub seq: u64,
    /// Link crossed.
    pub link: LinkId,
    /// Sender.
    pub from: NodeId,
    /// Receiver.
    pub to: NodeId,
    /// Message label (see [`Payload::kind`]), with `+corrupted` /
    /// `+duplicate` suffixes when a fault touched it.
    pub kind: String,
    /// Wire length.
    pub bytes: usize,
    /// Departure time (after any connection setup and processing charges).
    pub sent_at_ns: Ns,
    /// Arrival time; `None` when a fault dropped the message.
    pub delivered_at_ns: Option<Ns>,
    /// Raw record bytes for `Record` payloads, for wire-level inspection.
    #[serde(skip)]
    pub record: Option<Vec<u8>>,
}

/// An in-flight message an [`Interceptor`] can observe and rewrite.
///
/// Returning an empty vector swallows the message; returning several injects
/// extras. The default — implemented by [`Passthrough`] — forwards
/// everything untouched.
pub trait Interceptor {
    /// Called for every send, before link faults and counters.
    fn intercept(&mut self, link: LinkId, from: NodeId, payload: Payload) -> Vec<Payload>;
}

/// The honest non-interceptor.
pub struct Passthrough;

impl Interceptor for Passthrough {
    fn intercept(&mut self, _link: LinkId, _from: NodeId, payload: Payload) -> Vec<Payload> {
        vec![payload]
    }
}

/// A delivered message, handed to the receiving node.
#[derive(Debug)]
pub struct Delivery {
    /// Receiving node.
    pub to: NodeId,
    /// Sending node.
    pub from: NodeId,
    /// The message.
    pub payload: Payload,
    /// Arrival time (equals [`Sim::now`] when popped).
    pub at: Ns,
}

struct Pending {
    at: Ns,
    seq: u64,
    delivery: Delivery,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct Link {
    latency: Ns,
    counters: [LinkCounters; 2],
    fault: Option<Fault>,
}

/// The event queue, clock, links, and trace of one run.
pub struct Sim {
    now: Ns,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Pending>>,
    links: BTreeMap<LinkId, Link>,
    ready: BTreeMap<NodeId, Ns>,
    connections: HashSet<(NodeId, NodeId)>,
    interceptor: Box<dyn Interceptor>,
    trace: Vec<TraceEntry>,
}

impl Sim {
    /// A fresh simulation over the four-node topology. `lan` and `wan` are
    /// one-way link latencies.
    pub fn new(lan: Ns, wan: Ns, fault: Option<Fault>, interceptor: Box<dyn Interceptor>) -> Sim {
        let mut links = BTreeMap::new();
        for id in LinkId::ALL {
            let latency = match id {
                LinkId::MasterLan | LinkId::SlaveLan => lan,
                LinkId::KmeWan | LinkId::SaeWan => wan,
            };
            links.insert(
                id,
                Link {
                    latency,
                    counters: [LinkCounters::default(); 2],
                    fault: fault.filter(|f| f.link == id),
                },
            );
        }
        Sim {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            links,
            ready: BTreeMap::new(),
            connections: HashSet::new(),
            interceptor,
            trace: Vec::new(),
        }
    }

    /// Current virtual time.
    pub fn now(&self) -> Ns {
        self.now
    }

    /// One-way latency of `link`.
    pub fn latency(&self, link: LinkId) -> Ns {
        self.links[&link].latency
    }

    /// Charges `cost` of processing time to `node`: its next send departs no
    /// earlier than the charge completes.
    pub fn charge(&mut self, node: NodeId, cost: Ns) {
        let busy_until = self.ready.entry(node).or_insert(0);
        *busy_until = (*busy_until).max(self.now) + cost;
    }

    /// Sends `payload` from `from` to the adjacent node `to`. The configured
    /// interceptor may rewrite, swallow, or multiply the message; whatever
    /// survives is timestamped, counted, traced, and queued for delivery.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: Payload) {
        let link = LinkId::between(from, to)
            .unwrap_or_else(|| panic!("no link between {from:?} and {to:?}"));
        for survivor in self.interceptor.intercept(link, from, payload) {
            self.transmit(link, from, to, survivor);
        }
    }

    fn transmit(&mut self, link: LinkId, from: NodeId, to: NodeId, mut payload: Payload) {
        // A fresh HTTPS connection pays its setup round-trips before the
        // request departs. Only request-opening payloads can be first on a
        // connection; responses reuse it.
        let setup = match payload {
            Payload::KmeCall { .. } | Payload::Activate(_) => {
                let pair = (from.min(to), from.max(to));
                if self.connections.insert(pair) {
                    CONN_SETUP_RTTS * 2 * self.links[&link].latency
                } else {
                    0
                }
            }
            _ => 0,
        };

        let busy = self.ready.get(&from).copied().unwrap_or(0);
        let depart = self.now.max(busy) + setup;
        // Sends from one node serialize: the wire takes them one at a time.
        self.ready.insert(from, depart);

        let mut kind = payload.kind();
        let mut dropped = false;
        let mut duplicate = false;
        if let Payload::Record(bytes) = &mut payload {
            let armed = {
                let l = self.links.get_mut(&link).expect("link exists");
                match &mut l.fault {
                    Some(f) if f.skip > 0 => {
                        f.skip -= 1;
                        None
                    }
                    other => other.take(),
                }
            };
            if let Some(fault) = armed {
                match fault.kind {
                    FaultKind::DropOnce => {
                        dropped = true;
                        kind.push_str("+dropped");
                    }
                    FaultKind::CorruptByte { offset } => {
                        if !bytes.is_empty() {
                            let i = offset.min(bytes.len() - 1);
                            bytes[i] ^= 0x01;
                        }
                        kind.push_str("+corrupted");
                    }
                    FaultKind::DuplicateOnce => {
                        duplicate = true;
                    }
                }
            }
        }

        let copies = if duplicate { 2 } else { 1 };
        for copy in 0..copies {
            let link_state = self.links.get_mut(&link).expect("link exists");
            let (a, _) = link.endpoints();
            let dir = usize::from(from != a);
            link_state.counters[dir].messages += 1;
            link_state.counters[dir].bytes += payload.wire_len() as u64;

            let delivered_at = (!dropped).then_some(depart + link_state.latency);
            let seq = self.next_seq;
            self.next_seq += 1;
            self.trace.push(TraceEntry {
                seq,
                link,
                from,
                to,
                kind: if copy == 1 {
                    format!("{kind}+duplicate")
                } else {
                    kind.clone()
                },
                bytes: payload.wire_len(),
                sent_at_ns: depart,
                delivered_at_ns: delivered_at,
                record: match &payload {
                    Payload::Record(bytes) => Some(bytes.clone()),
                    _ => None,
                },
            });
            if let Some(at) = delivered_at {
                self.queue.push(Reverse(Pending {
                    at,
                    seq,
                    delivery: Delivery {
                        to,
                        from,
                        payload: payload.clone(),
                        at,
                    },
                }));
            }
        }
    }

    /// Delivers the next queued message, advancing the clock to its arrival.
    pub fn pop(&mut self) -> Option<Delivery> {
        let Reverse(pending) = self.queue.pop()?;
        self.now = pending.at;
        Some(pending.delivery)
    }

    /// Time of the last delivery, i.e. when the run's final message landed.
    pub fn wall_time(&self) -> Ns {
        self.trace
            .iter()
            .filter_map(|e| e.delivered_at_ns)
            .max()
            .unwrap_or(0)
    }

    /// Directional counters for `link`: `[a→b, b→a]` in endpoint order.
    pub fn counters(&self, link: LinkId) -> [LinkCounters; 2] {
        self.links[&link].counters
    }

    /// Total messages sent across all links.
    pub fn total_messages(&self) -> u64 {
        self.trace.len() as u64
    }

    /// The recorded trace, in send order.
    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Consumes the simulation, returning the trace.
    pub fn into_trace(self) -> Vec<TraceEntry> {
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_payload() -> Payload {
        // A minimal record-shaped blob: content type, version, length 2.
        Payload::Record(vec![REC_HANDSHAKE, 0x0E, 0x00, 0x00, 0x02, 0xAA, 0xBB])
    }

    #[test]
    fn delivery_order_is_time_then_send_order() {
        let mut sim = Sim::new(100, 1000, None, Box::new(Passthrough));
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload()); // wan, arrives :1000
        let mut sim2 = Sim::new(100, 1000, None, Box::new(Passthrough));
        // Two sends from different nodes at t0 on links of different speed:
        // the LAN message arrives first despite being sent second.
        sim2.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        sim2.send(NodeId::SlaveSae, NodeId::Kme2, record_payload());
        let first = sim2.pop().expect("two messages queued");
        assert_eq!(first.to, NodeId::Kme2);
        assert_eq!(first.at, 100);
        let second = sim2.pop().expect("one message left");
        assert_eq!(second.to, NodeId::SlaveSae);
        assert_eq!(second.at, 1000);
        assert!(sim2.pop().is_none());
        drop(sim);
    }

    #[test]
    fn connection_setup_charged_once_per_pair() {
        let mut sim = Sim::new(100, 1000, None, Box::new(Passthrough));
        let call = Payload::KmeCall {
            caller_serial: 1,
            call: KmeCall::OwnSaeId,
        };
        sim.send(NodeId::MasterSae, NodeId::Kme1, call.clone());
        sim.send(NodeId::MasterSae, NodeId::Kme1, call);
        let trace = sim.trace();
        // First call pays 2 RTTs (4 × 100 ns one-way), second departs right
        // after it with no further setup.
        assert_eq!(trace[0].sent_at_ns, 400);
        assert_eq!(trace[0].delivered_at_ns, Some(500));
        assert_eq!(trace[1].sent_at_ns, 400);
        assert_eq!(trace[1].delivered_at_ns, Some(500));
    }

    #[test]
    fn responses_never_pay_setup() {
        let mut sim = Sim::new(100, 1000, None, Box::new(Passthrough));
        sim.send(
            NodeId::Kme1,
            NodeId::MasterSae,
            Payload::ActivateAck { status: 200 },
        );
        assert_eq!(sim.trace()[0].sent_at_ns, 0);
        assert_eq!(sim.trace()[0].delivered_at_ns, Some(100));
    }

    #[test]
    fn processing_charge_delays_departure() {
        let mut sim = Sim::new(100, 1000, None, Box::new(Passthrough));
        sim.charge(NodeId::MasterSae, 5_000);
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        assert_eq!(sim.trace()[0].sent_at_ns, 5_000);
        assert_eq!(sim.trace()[0].delivered_at_ns, Some(6_000));
    }

    #[test]
    fn drop_fault_discards_exactly_one_record() {
        let fault = Fault {
            link: LinkId::SaeWan,
            kind: FaultKind::DropOnce,
            skip: 1,
        };
        let mut sim = Sim::new(100, 1000, Some(fault), Box::new(Passthrough));
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        let delivered: Vec<bool> = sim
            .trace()
            .iter()
            .map(|e| e.delivered_at_ns.is_some())
            .collect();
        assert_eq!(delivered, [true, false, true]);
        assert!(sim.trace()[1].kind.ends_with("+dropped"));
        // Dropped messages still count as sent.
        let [fwd, _] = sim.counters(LinkId::SaeWan);
        assert_eq!(fwd.messages, 3);
    }

    #[test]
    fn corrupt_fault_flips_one_bit() {
        let fault = Fault {
            link: LinkId::SaeWan,
            kind: FaultKind::CorruptByte { offset: 5 },
            skip: 0,
        };
        let mut sim = Sim::new(100, 1000, Some(fault), Box::new(Passthrough));
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        let delivered = sim.pop().expect("delivered");
        let Payload::Record(bytes) = delivered.payload else {
            panic!("record expected");
        };
        assert_eq!(bytes[5], 0xAB);
        assert!(sim.trace()[0].kind.ends_with("+corrupted"));
    }

    #[test]
    fn duplicate_fault_delivers_twice() {
        let fault = Fault {
            link: LinkId::SaeWan,
            kind: FaultKind::DuplicateOnce,
            skip: 0,
        };
        let mut sim = Sim::new(100, 1000, Some(fault), Box::new(Passthrough));
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        assert_eq!(sim.trace().len(), 2);
        assert!(sim.trace()[1].kind.ends_with("+duplicate"));
        assert!(sim.pop().is_some());
        assert!(sim.pop().is_some());
        assert!(sim.pop().is_none());
    }

    #[test]
    fn faults_ignore_kme_traffic() {
        let fault = Fault {
            link: LinkId::MasterLan,
            kind: FaultKind::DropOnce,
            skip: 0,
        };
        let mut sim = Sim::new(100, 1000, Some(fault), Box::new(Passthrough));
        sim.send(
            NodeId::MasterSae,
            NodeId::Kme1,
            Payload::KmeCall {
                caller_serial: 1,
                call: KmeCall::OwnSaeId,
            },
        );
        assert!(sim.trace()[0].delivered_at_ns.is_some());
    }

    #[test]
    fn counters_split_by_direction() {
        let mut sim = Sim::new(100, 1000, None, Box::new(Passthrough));
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        sim.send(NodeId::SlaveSae, NodeId::MasterSae, record_payload());
        sim.send(NodeId::SlaveSae, NodeId::MasterSae, record_payload());
        let [fwd, rev] = sim.counters(LinkId::SaeWan);
        assert_eq!(fwd.messages, 1);
        assert_eq!(rev.messages, 2);
        assert_eq!(fwd.bytes, 7);
    }

    #[test]
    fn swallowing_interceptor_suppresses_the_send() {
        struct Blackhole;
        impl Interceptor for Blackhole {
            fn intercept(&mut self, _: LinkId, _: NodeId, _: Payload) -> Vec<Payload> {
                Vec::new()
            }
        }
        let mut sim = Sim::new(100, 1000, None, Box::new(Blackhole));
        sim.send(NodeId::MasterSae, NodeId::SlaveSae, record_payload());
        assert!(sim.trace().is_empty());
        assert!(sim.pop().is_none());
    }
}
