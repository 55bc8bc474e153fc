//! Test support: a deterministic in-memory KME stub and a transport-free
//! pump that runs a master and a slave machine against each other.
//!
//! Compiled for this crate's own tests and, via the `testing` feature, for
//! downstream integration suites.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use rand::rngs::StdRng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use qkd_keystore::{derive_key_uuid, KeyMaterial, KeyUuid, SaeId};

use crate::consts::{PROTOCOL_VERSION_CLASSICAL, PROTOCOL_VERSION_QKD};
use crate::handshake::{
    Established, HandshakeError, HsAction, MasterConfig, MasterHandshake, ModePolicy, SlaveConfig,
    SlaveHandshake,
};
use crate::kme::{KmeAccess, KmeFailure, KmeReply, KmeRequest};
use crate::rng::HandshakeRng;
use crate::wire::encode_alert;

/// A seeded deterministic RNG boxed for the handshake machines.
pub fn test_rng(seed: u64) -> Box<dyn HandshakeRng> {
    Box::new(StdRng::seed_from_u64(seed))
}

/// Deterministic 32-byte key material for pool slot `index`.
pub fn stub_material(index: u64) -> KeyMaterial {
    let mut hasher = Sha256::new();
    hasher.update(b"stub pool material");
    hasher.update(index.to_be_bytes());
    let digest = hasher.finalize();
    let mut material = [0u8; 32];
    material.copy_from_slice(&digest);
    material
}

struct PoolInner {
    fresh: VecDeque<(KeyUuid, KeyMaterial)>,
    by_uuid: HashMap<KeyUuid, KeyMaterial>,
}

/// An in-memory key pool shared by a pair of [`StubKme`]s, standing in for
/// two KMEs that hold the same quantum-distributed material.
#[derive(Clone)]
pub struct SharedPool {
    inner: Arc<Mutex<PoolInner>>,
}

impl SharedPool {
    /// A pool preloaded with `count` deterministic keys.
    pub fn with_keys(count: usize) -> SharedPool {
        let mut fresh = VecDeque::with_capacity(count);
        let mut by_uuid = HashMap::with_capacity(count);
        for index in 0..count {
            let material = stub_material(index as u64);
            let uuid = derive_key_uuid(&material);
            fresh.push_back((uuid, material));
            by_uuid.insert(uuid, material);
        }
        SharedPool {
            inner: Arc::new(Mutex::new(PoolInner { fresh, by_uuid })),
        }
    }

    /// A stub KME endpoint backed by this pool, answering for `own_sae_id`.
    pub fn stub(&self, own_sae_id: SaeId) -> StubKme {
        StubKme {
            pool: Arc::clone(&self.inner),
            own_sae_id,
            fail_with: None,
            requests: Vec::new(),
        }
    }

    /// Keys not yet handed out to a master.
    pub fn fresh_key_count(&self) -> usize {
        self.inner.lock().unwrap().fresh.len()
    }
}

/// A scripted KME endpoint: answers from a [`SharedPool`], records every
/// request, and can be forced to fail.
pub struct StubKme {
    pool: Arc<Mutex<PoolInner>>,
    own_sae_id: SaeId,
    /// When set, every request fails with a clone of this failure.
    pub fail_with: Option<KmeFailure>,
    /// Every request seen, in order.
    pub requests: Vec<KmeRequest>,
}

impl KmeAccess for StubKme {
    fn perform(&mut self, request: &KmeRequest) -> KmeReply {
        self.requests.push(request.clone());
        if let Some(failure) = &self.fail_with {
            return KmeReply::Failed(failure.clone());
        }
        let mut pool = self.pool.lock().unwrap();
        match request {
            KmeRequest::OwnSaeId => KmeReply::OwnSaeId(self.own_sae_id),
            KmeRequest::NewKey { .. } => match pool.fresh.pop_front() {
                Some((key_uuid, material)) => KmeReply::NewKey { key_uuid, material },
                None => KmeReply::Failed(KmeFailure::PoolExhausted),
            },
            KmeRequest::KeyById { key_uuid, .. } => match pool.by_uuid.remove(key_uuid) {
                Some(material) => KmeReply::KeyMaterial(material),
                None => KmeReply::Failed(KmeFailure::KeyNotFound),
            },
        }
    }
}

/// Uniform driving surface over the two machine types.
trait Machine {
    fn on_record(&mut self, record: &[u8]) -> Result<Vec<HsAction>, HandshakeError>;
    fn on_kme_reply(&mut self, reply: KmeReply) -> Result<Vec<HsAction>, HandshakeError>;
}

impl Machine for MasterHandshake {
    fn on_record(&mut self, record: &[u8]) -> Result<Vec<HsAction>, HandshakeError> {
        MasterHandshake::on_record(self, record)
    }
    fn on_kme_reply(&mut self, reply: KmeReply) -> Result<Vec<HsAction>, HandshakeError> {
        MasterHandshake::on_kme_reply(self, reply)
    }
}

impl Machine for SlaveHandshake {
    fn on_record(&mut self, record: &[u8]) -> Result<Vec<HsAction>, HandshakeError> {
        SlaveHandshake::on_record(self, record)
    }
    fn on_kme_reply(&mut self, reply: KmeReply) -> Result<Vec<HsAction>, HandshakeError> {
        SlaveHandshake::on_kme_reply(self, reply)
    }
}

/// What each side of a pumped handshake ended with; a side that never
/// reached a terminal outcome reports a protocol error.
pub struct PairOutcome {
    /// The master's terminal result.
    pub master: Result<Established, HandshakeError>,
    /// The slave's terminal result.
    pub slave: Result<Established, HandshakeError>,
    /// Records the master wrote to the wire, in order (alerts included).
    pub master_sent: Vec<Vec<u8>>,
    /// Records the slave wrote to the wire, in order (alerts included).
    pub slave_sent: Vec<Vec<u8>>,
}

impl PairOutcome {
    /// Both sides established, in the given modes, with matching record
    /// protection (probed by the caller separately if needed).
    pub fn established_modes(&self) -> Option<(crate::handshake::EstablishedMode, crate::handshake::EstablishedMode)> {
        match (&self.master, &self.slave) {
            (Ok(m), Ok(s)) => Some((m.mode, s.mode)),
            _ => None,
        }
    }
}

/// One side of the pump: pending deliveries and the terminal result.
struct Side {
    alert_version: u16,
    outbox: VecDeque<Vec<u8>>,
    sent_log: Vec<Vec<u8>>,
    result: Option<Result<Established, HandshakeError>>,
}

impl Side {
    fn new(alert_version: u16) -> Side {
        Side {
            alert_version,
            outbox: VecDeque::new(),
            sent_log: Vec::new(),
            result: None,
        }
    }

    fn done(&self) -> bool {
        self.result.is_some()
    }

    /// Processes one action-list result, chasing KME request chains, the way
    /// a driver would: sends go out, errors turn into an alert plus a
    /// terminal Err, `Established` ends the handshake.
    fn absorb(
        &mut self,
        machine: &mut dyn Machine,
        kme: &mut dyn KmeAccess,
        first: Result<Vec<HsAction>, HandshakeError>,
    ) {
        let mut pending = first;
        loop {
            let actions = match pending {
                Ok(actions) => actions,
                Err(error) => {
                    if let Some(code) = error.alert_to_send() {
                        let alert = encode_alert(code, self.alert_version);
                        self.sent_log.push(alert.clone());
                        self.outbox.push_back(alert);
                    }
                    self.result = Some(Err(error));
                    return;
                }
            };
            let mut next = None;
            for action in actions {
                match action {
                    HsAction::SendRecord(record) => {
                        self.sent_log.push(record.clone());
                        self.outbox.push_back(record);
                    }
                    HsAction::KmeRequest(request) => {
                        let reply = kme.perform(&request);
                        next = Some(machine.on_kme_reply(reply));
                    }
                    HsAction::Established(established) => {
                        self.result = Some(Ok(*established));
                    }
                }
            }
            match next {
                Some(p) => pending = p,
                None => return,
            }
        }
    }
}

fn alert_version_for(policy: ModePolicy) -> u16 {
    match policy {
        ModePolicy::ClassicalOnly => PROTOCOL_VERSION_CLASSICAL,
        _ => PROTOCOL_VERSION_QKD,
    }
}

/// Runs `master_cfg` against `slave_cfg` with no transport between them,
/// delivering records in order and answering KME requests synchronously.
/// Handshake RNGs are seeded from `seed`.
pub fn run_pair(
    master_cfg: MasterConfig,
    slave_cfg: SlaveConfig,
    master_kme: &mut dyn KmeAccess,
    slave_kme: &mut dyn KmeAccess,
    seed: u64,
) -> PairOutcome {
    let mut master = MasterHandshake::new(master_cfg, test_rng(seed));
    let mut slave = SlaveHandshake::new(slave_cfg, test_rng(seed ^ 0x5a5a_5a5a_5a5a_5a5a));
    let mut master_side = Side::new(alert_version_for(master_cfg.policy));
    let mut slave_side = Side::new(alert_version_for(slave_cfg.policy));

    let start = master.start();
    master_side.absorb(&mut master, master_kme, start);

    loop {
        let mut progressed = false;
        if !slave_side.done() {
            if let Some(record) = master_side.outbox.pop_front() {
                let step = Machine::on_record(&mut slave, &record);
                slave_side.absorb(&mut slave, slave_kme, step);
                progressed = true;
            }
        }
        if !master_side.done() {
            if let Some(record) = slave_side.outbox.pop_front() {
                let step = Machine::on_record(&mut master, &record);
                master_side.absorb(&mut master, master_kme, step);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    PairOutcome {
        master: master_side.result.unwrap_or_else(|| {
            Err(HandshakeError::Protocol(
                "master never reached a terminal outcome".to_string(),
            ))
        }),
        slave: slave_side.result.unwrap_or_else(|| {
            Err(HandshakeError::Protocol(
                "slave never reached a terminal outcome".to_string(),
            ))
        }),
        master_sent: master_side.sent_log,
        slave_sent: slave_side.sent_log,
    }
}
