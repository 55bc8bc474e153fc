//! The four node behaviors wired into the simulator.
//!
//! The SAE nodes drive the real sans-io handshake machines; the KME nodes
//! answer through the real service core (registries, reservation, one-time
//! delivery, activation — all live). Only the transport is simulated: HTTP
//! request/response pairs and the KME-to-KME activation push become explicit
//! simulator messages, so every leg shows up in the trace with a latency.

use std::sync::Arc;

use qkd_keystore::{KeyMaterial, KeyStoreError, KeyUuid, KmeId, SaeId, KEY_SIZE_BYTES};
use qkd_kme::api::ActivationMsg;
use qkd_kme::config::PeerConfig;
use qkd_kme::core::KmeCore;
use qkd_kme::notify::{ActivationNotifier, NotifyFailure};
use qkd_kme::ServiceError;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tls_qkd::challenge::{open_challenge_body, seal_challenge_body, SEED_LEN, TOKEN_LEN};
use tls_qkd::consts::{PROTOCOL_VERSION_CLASSICAL, PROTOCOL_VERSION_QKD, REC_ALERT, REC_HANDSHAKE};
use tls_qkd::handshake::{
    Established, EstablishedMode, HandshakeError, HsAction, MasterConfig, MasterHandshake,
    ModePolicy, SlaveConfig, SlaveHandshake,
};
use tls_qkd::kme::{KmeFailure, KmeReply, KmeRequest};
use tls_qkd::nonce::{derive_nonce, Direction};
use tls_qkd::wire::{
    decode_alert, decode_client_hello, decode_server_hello, encode_alert, encode_challenge_ack,
    encode_client_hello, peek_content_type, ClientHello, QkdHello,
};
use tls_qkd::AlertCode;

use crate::sim::{KmeCall, NodeId, Payload, Sim, ASYM_OP_NS, SYM_OP_NS};

/// Master SAE identity in the simulated registry.
pub const MASTER_SAE_ID: SaeId = 101;
/// Slave SAE identity.
pub const SLAVE_SAE_ID: SaeId = 202;
/// Certificate serial the master SAE presents to its KME.
pub const MASTER_SERIAL: u64 = 1101;
/// Certificate serial the slave SAE presents to its KME.
pub const SLAVE_SERIAL: u64 = 2202;
/// The master-side KME.
pub const KME1_ID: KmeId = 1;
/// The slave-side KME.
pub const KME2_ID: KmeId = 2;
/// Certificate serial KME 1 presents on the federation link.
pub const KME1_SERIAL: u64 = 5001;
/// Certificate serial KME 2 presents on the federation link.
pub const KME2_SERIAL: u64 = 5002;

/// An [`ActivationNotifier`] that is never invoked: the simulation carries
/// activations as explicit messages instead of calling through the core's
/// async notification path.
pub struct InertNotifier;

impl ActivationNotifier for InertNotifier {
    async fn notify(
        &self,
        _peer: &PeerConfig,
        _activation: &ActivationMsg,
    ) -> Result<(), NotifyFailure> {
        Ok(())
    }
}

/// How one endpoint's run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SideEnd {
    /// Handshake completed in the given mode.
    Established(EstablishedMode),
    /// This endpoint detected a failure and aborted.
    Rejected {
        /// The local error, rendered.
        error: String,
        /// Alert sent to the peer, if the failure warranted one.
        alert_sent: Option<AlertCode>,
    },
    /// The peer aborted with this alert.
    PeerAlert(AlertCode),
    /// The run drained with this endpoint still waiting (e.g. after a
    /// dropped message; the simulator has no retransmission timers).
    Unresolved,
}

impl SideEnd {
    /// Compact label for reports.
    pub fn label(&self) -> String {
        match self {
            SideEnd::Established(EstablishedMode::TlsQkd) => "established(TLS-QKD)".into(),
            SideEnd::Established(EstablishedMode::Classical) => "established(classical)".into(),
            SideEnd::Rejected { alert_sent, error } => match alert_sent {
                Some(code) => format!("rejected({code:?})"),
                None => format!("rejected({error})"),
            },
            SideEnd::PeerAlert(code) => format!("peer-alert({code:?})"),
            SideEnd::Unresolved => "unresolved".into(),
        }
    }
}

/// Challenge-ack behavior of the adversarial master.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckStrategy {
    /// Holds a corrupted copy of the key: cannot open the challenge, answers
    /// with a blind guess sealed under the wrong key.
    BlindCorruptKey,
    /// Holds the real key but answers with the challenge's own seed instead
    /// of a fresh one.
    ReplaySeed,
    /// Holds the real key but returns a token it made up.
    WrongToken,
}

enum MasterDriver {
    Machine(MasterHandshake),
    Scripted(ScriptedMaster),
}

/// The TLS-client node.
pub struct MasterNode {
    driver: MasterDriver,
    policy: ModePolicy,
    serial: u64,
    pub(crate) end: Option<SideEnd>,
    pub(crate) established: Option<Established>,
    pub(crate) key_uuid: Option<KeyUuid>,
    pub(crate) last_kme_error: Option<u16>,
    pub(crate) late_peer_alert: Option<AlertCode>,
}

impl MasterNode {
    /// An honest master running the real handshake machine.
    pub fn machine(config: MasterConfig, seed: u64) -> MasterNode {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        MasterNode {
            policy: config.policy,
            driver: MasterDriver::Machine(MasterHandshake::new(config, Box::new(rng))),
            serial: MASTER_SERIAL,
            end: None,
            established: None,
            key_uuid: None,
            last_kme_error: None,
            late_peer_alert: None,
        }
    }

    /// A key-holding adversary following the wire format but not the rules.
    pub fn scripted(strategy: AckStrategy, seed: u64) -> MasterNode {
        MasterNode {
            policy: ModePolicy::QkdOnly,
            driver: MasterDriver::Scripted(ScriptedMaster::new(strategy, seed)),
            serial: MASTER_SERIAL,
            end: None,
            established: None,
            key_uuid: None,
            last_kme_error: None,
            late_peer_alert: None,
        }
    }

    /// Kicks off the handshake at virtual time zero.
    pub fn begin(&mut self, sim: &mut Sim) {
        match &mut self.driver {
            MasterDriver::Machine(machine) => {
                if self.policy == ModePolicy::ClassicalOnly {
                    // Ephemeral keygen plus signing preparation for the
                    // classical hello.
                    sim.charge(NodeId::MasterSae, ASYM_OP_NS);
                }
                let result = machine.start();
                self.absorb(sim, result);
            }
            MasterDriver::Scripted(_) => {
                sim.send(
                    NodeId::MasterSae,
                    NodeId::Kme1,
                    Payload::KmeCall {
                        caller_serial: self.serial,
                        call: KmeCall::OwnSaeId,
                    },
                );
            }
        }
    }

    /// Feeds one delivered message in.
    pub fn on_payload(&mut self, sim: &mut Sim, payload: Payload) {
        if self.end.is_some() {
            // Only a late alert is worth remembering once we are done.
            if let Payload::Record(bytes) = &payload {
                if peek_content_type(bytes) == Ok(REC_ALERT) {
                    self.late_peer_alert = decode_alert(bytes).ok();
                }
            }
            return;
        }
        if let MasterDriver::Scripted(_) = self.driver {
            self.scripted_on_payload(sim, payload);
            return;
        }
        match payload {
            Payload::Record(bytes) => {
                self.charge_for_record(sim, &bytes);
                let MasterDriver::Machine(machine) = &mut self.driver else {
                    unreachable!("scripted handled above");
                };
                let result = machine.on_record(&bytes);
                self.absorb(sim, result);
            }
            Payload::KmeAnswer { status, reply } => {
                if status != 200 {
                    self.last_kme_error = Some(status);
                }
                if let KmeReply::NewKey { key_uuid, .. } = &reply {
                    self.key_uuid = Some(*key_uuid);
                }
                let MasterDriver::Machine(machine) = &mut self.driver else {
                    unreachable!("scripted handled above");
                };
                let result = machine.on_kme_reply(reply);
                self.absorb(sim, result);
            }
            other => panic!("master SAE received unexpected payload {:?}", other.kind()),
        }
    }

    /// Models the cryptographic work a ServerHello triggers: answering a QKD
    /// challenge is one symmetric operation, completing a classical exchange
    /// one asymmetric bundle. Refusals do no key work.
    fn charge_for_record(&self, sim: &mut Sim, bytes: &[u8]) {
        if peek_content_type(bytes) != Ok(REC_HANDSHAKE) {
            return;
        }
        let Ok(hello) = decode_server_hello(bytes) else {
            return;
        };
        if hello.challenge.is_some() {
            sim.charge(NodeId::MasterSae, SYM_OP_NS);
        } else if self.policy != ModePolicy::QkdOnly {
            sim.charge(NodeId::MasterSae, ASYM_OP_NS);
        }
    }

    fn absorb(&mut self, sim: &mut Sim, result: Result<Vec<HsAction>, HandshakeError>) {
        match result {
            Ok(actions) => {
                for action in actions {
                    match action {
                        HsAction::SendRecord(record) => {
                            sim.send(NodeId::MasterSae, NodeId::SlaveSae, Payload::Record(record));
                        }
                        HsAction::KmeRequest(request) => {
                            let call = match request {
                                KmeRequest::OwnSaeId => KmeCall::OwnSaeId,
                                KmeRequest::NewKey { slave_sae_id } => {
                                    KmeCall::NewKey { slave_sae_id }
                                }
                                KmeRequest::KeyById {
                                    master_sae_id,
                                    key_uuid,
                                } => KmeCall::KeyById {
                                    master_sae_id,
                                    key_uuid,
                                },
                            };
                            sim.send(
                                NodeId::MasterSae,
                                NodeId::Kme1,
                                Payload::KmeCall {
                                    caller_serial: self.serial,
                                    call,
                                },
                            );
                        }
                        HsAction::Established(done) => {
                            self.end = Some(SideEnd::Established(done.mode));
                            self.established = Some(*done);
                        }
                    }
                }
            }
            Err(HandshakeError::PeerAlert(code)) => {
                self.end = Some(SideEnd::PeerAlert(code));
            }
            Err(error) => {
                let alert = error.alert_to_send();
                if let Some(code) = alert {
                    let version = version_for_alert(self.policy);
                    sim.send(
                        NodeId::MasterSae,
                        NodeId::SlaveSae,
                        Payload::Record(encode_alert(code, version)),
                    );
                }
                self.end = Some(SideEnd::Rejected {
                    error: error.to_string(),
                    alert_sent: alert,
                });
            }
        }
    }

    fn scripted_on_payload(&mut self, sim: &mut Sim, payload: Payload) {
        let MasterDriver::Scripted(script) = &mut self.driver else {
            unreachable!("caller checked");
        };
        match payload {
            Payload::KmeAnswer { status, reply } => {
                if status != 200 {
                    self.last_kme_error = Some(status);
                }
                if let KmeReply::NewKey { key_uuid, .. } = &reply {
                    self.key_uuid = Some(*key_uuid);
                }
                match script.on_kme_reply(reply) {
                    ScriptStep::Call(call) => sim.send(
                        NodeId::MasterSae,
                        NodeId::Kme1,
                        Payload::KmeCall {
                            caller_serial: self.serial,
                            call,
                        },
                    ),
                    ScriptStep::Send(record) => {
                        sim.send(NodeId::MasterSae, NodeId::SlaveSae, Payload::Record(record));
                    }
                    ScriptStep::Abort(reason) => {
                        self.end = Some(SideEnd::Rejected {
                            error: reason,
                            alert_sent: None,
                        });
                    }
                }
            }
            Payload::Record(bytes) => {
                if peek_content_type(&bytes) == Ok(REC_ALERT) {
                    if let Ok(code) = decode_alert(&bytes) {
                        self.end = Some(SideEnd::PeerAlert(code));
                    }
                    return;
                }
                match script.on_record(&bytes) {
                    Some(ScriptStep::Send(record)) => {
                        // Crafting the ack is one AEAD operation.
                        sim.charge(NodeId::MasterSae, SYM_OP_NS);
                        sim.send(NodeId::MasterSae, NodeId::SlaveSae, Payload::Record(record));
                    }
                    Some(ScriptStep::Abort(reason)) => {
                        self.end = Some(SideEnd::Rejected {
                            error: reason,
                            alert_sent: None,
                        });
                    }
                    Some(ScriptStep::Call(_)) | None => {}
                }
            }
            other => panic!("master SAE received unexpected payload {:?}", other.kind()),
        }
    }
}

fn version_for_alert(policy: ModePolicy) -> u16 {
    match policy {
        ModePolicy::ClassicalOnly => PROTOCOL_VERSION_CLASSICAL,
        _ => PROTOCOL_VERSION_QKD,
    }
}

enum ScriptStep {
    Call(KmeCall),
    Send(Vec<u8>),
    Abort(String),
}

enum ScriptState {
    AwaitOwnId,
    AwaitKey {
        own_sae_id: SaeId,
    },
    AwaitServerHello {
        key: KeyMaterial,
        base_iv: [u8; 12],
    },
    Done,
}

/// A malicious TLS client that speaks the wire format faithfully — it
/// obtains a real key through the KME like anyone else — but mis-answers
/// the confirmation challenge per its [`AckStrategy`].
struct ScriptedMaster {
    strategy: AckStrategy,
    rng: ChaCha8Rng,
    state: ScriptState,
}

impl ScriptedMaster {
    fn new(strategy: AckStrategy, seed: u64) -> ScriptedMaster {
        ScriptedMaster {
            strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: ScriptState::AwaitOwnId,
        }
    }

    fn random<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.rng.fill_bytes(&mut out);
        out
    }

    fn on_kme_reply(&mut self, reply: KmeReply) -> ScriptStep {
        match reply {
            KmeReply::OwnSaeId(own_sae_id) if matches!(self.state, ScriptState::AwaitOwnId) => {
                self.state = ScriptState::AwaitKey { own_sae_id };
                ScriptStep::Call(KmeCall::NewKey {
                    slave_sae_id: SLAVE_SAE_ID,
                })
            }
            KmeReply::NewKey { key_uuid, material } => {
                let ScriptState::AwaitKey { own_sae_id } = &self.state else {
                    return ScriptStep::Abort("key delivered before it was requested".into());
                };
                let own_sae_id = *own_sae_id;
                let mut key = material;
                if self.strategy == AckStrategy::BlindCorruptKey {
                    key[0] ^= 0x01;
                }
                let base_iv: [u8; 12] = self.random();
                let hello = ClientHello {
                    version: PROTOCOL_VERSION_QKD,
                    random: self.random(),
                    qkd: Some(QkdHello {
                        master_sae_id: own_sae_id,
                        key_uuid,
                        base_iv,
                    }),
                    key_share: Some(self.random()),
                };
                self.state = ScriptState::AwaitServerHello { key, base_iv };
                ScriptStep::Send(encode_client_hello(&hello))
            }
            KmeReply::Failed(failure) => {
                ScriptStep::Abort(format!("KME refused the adversary: {failure}"))
            }
            reply => ScriptStep::Abort(format!("unexpected KME reply {reply:?}")),
        }
    }

    fn on_record(&mut self, record: &[u8]) -> Option<ScriptStep> {
        let ScriptState::AwaitServerHello { key, base_iv } = &self.state else {
            return None;
        };
        let key = *key;
        let base_iv = *base_iv;
        let hello = match decode_server_hello(record) {
            Ok(hello) => hello,
            Err(e) => return Some(ScriptStep::Abort(format!("undecodable ServerHello: {e}"))),
        };
        let Some(challenge_ct) = hello.challenge else {
            return Some(ScriptStep::Abort("server took the classical path".into()));
        };
        let ack_nonce = derive_nonce(&base_iv, Direction::MasterToSlave, 0);
        let ciphertext = match self.strategy {
            AckStrategy::BlindCorruptKey => {
                // Cannot open the challenge (wrong key); guess everything.
                let token: [u8; TOKEN_LEN] = self.random();
                let seed: [u8; SEED_LEN] = self.random();
                seal_challenge_body(&key, &ack_nonce, &token, &seed)
            }
            AckStrategy::ReplaySeed => {
                let challenge_nonce = derive_nonce(&base_iv, Direction::SlaveToMaster, 0);
                let Some((token, seed)) = open_challenge_body(&key, &challenge_nonce, &challenge_ct)
                else {
                    return Some(ScriptStep::Abort("challenge did not open".into()));
                };
                // Honest token, but the seed is echoed instead of renewed.
                seal_challenge_body(&key, &ack_nonce, &token, &seed)
            }
            AckStrategy::WrongToken => {
                let challenge_nonce = derive_nonce(&base_iv, Direction::SlaveToMaster, 0);
                if open_challenge_body(&key, &challenge_nonce, &challenge_ct).is_none() {
                    return Some(ScriptStep::Abort("challenge did not open".into()));
                }
                let token: [u8; TOKEN_LEN] = self.random();
                let seed: [u8; SEED_LEN] = self.random();
                seal_challenge_body(&key, &ack_nonce, &token, &seed)
            }
        };
        self.state = ScriptState::Done;
        Some(ScriptStep::Send(encode_challenge_ack(&ciphertext)))
    }
}

/// The TLS-server node, always driven by the real slave machine.
pub struct SlaveNode {
    machine: SlaveHandshake,
    policy: ModePolicy,
    serial: u64,
    pub(crate) end: Option<SideEnd>,
    pub(crate) established: Option<Established>,
    pub(crate) last_kme_error: Option<u16>,
    pub(crate) late_peer_alert: Option<AlertCode>,
}

impl SlaveNode {
    /// A slave with the given policy, presenting `serial` to its KME.
    /// Passing an unregistered serial models a server whose certificate the
    /// KME does not recognize.
    pub fn new(config: SlaveConfig, serial: u64, seed: u64) -> SlaveNode {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        SlaveNode {
            policy: config.policy,
            machine: SlaveHandshake::new(config, Box::new(rng)),
            serial,
            end: None,
            established: None,
            last_kme_error: None,
            late_peer_alert: None,
        }
    }

    /// Feeds one delivered message in.
    pub fn on_payload(&mut self, sim: &mut Sim, payload: Payload) {
        if self.end.is_some() {
            if let Payload::Record(bytes) = &payload {
                if peek_content_type(bytes) == Ok(REC_ALERT) {
                    self.late_peer_alert = decode_alert(bytes).ok();
                }
            }
            return;
        }
        match payload {
            Payload::Record(bytes) => {
                self.charge_for_record(sim, &bytes);
                let result = self.machine.on_record(&bytes);
                self.absorb(sim, result);
            }
            Payload::KmeAnswer { status, reply } => {
                if status != 200 {
                    self.last_kme_error = Some(status);
                }
                if matches!(reply, KmeReply::KeyMaterial(_)) {
                    // Building the challenge is one AEAD seal.
                    sim.charge(NodeId::SlaveSae, SYM_OP_NS);
                }
                let result = self.machine.on_kme_reply(reply);
                self.absorb(sim, result);
            }
            other => panic!("slave SAE received unexpected payload {:?}", other.kind()),
        }
    }

    /// A ClientHello that sends the slave down the classical path costs one
    /// asymmetric bundle (ephemeral agreement plus signature); the QKD path
    /// defers to the KME, and an immediate refusal does no key work.
    fn charge_for_record(&self, sim: &mut Sim, bytes: &[u8]) {
        if peek_content_type(bytes) != Ok(REC_HANDSHAKE) {
            return;
        }
        let Ok(hello) = decode_client_hello(bytes) else {
            return;
        };
        let classical_service = match (&hello.qkd, self.policy) {
            (Some(_), ModePolicy::ClassicalOnly) => true,
            (Some(_), _) => false,
            (None, ModePolicy::QkdOnly) => false,
            (None, _) => true,
        };
        if classical_service {
            sim.charge(NodeId::SlaveSae, ASYM_OP_NS);
        }
    }

    fn absorb(&mut self, sim: &mut Sim, result: Result<Vec<HsAction>, HandshakeError>) {
        match result {
            Ok(actions) => {
                for action in actions {
                    match action {
                        HsAction::SendRecord(record) => {
                            sim.send(NodeId::SlaveSae, NodeId::MasterSae, Payload::Record(record));
                        }
                        HsAction::KmeRequest(request) => {
                            let call = match request {
                                KmeRequest::KeyById {
                                    master_sae_id,
                                    key_uuid,
                                } => KmeCall::KeyById {
                                    master_sae_id,
                                    key_uuid,
                                },
                                KmeRequest::OwnSaeId => KmeCall::OwnSaeId,
                                KmeRequest::NewKey { slave_sae_id } => {
                                    KmeCall::NewKey { slave_sae_id }
                                }
                            };
                            sim.send(
                                NodeId::SlaveSae,
                                NodeId::Kme2,
                                Payload::KmeCall {
                                    caller_serial: self.serial,
                                    call,
                                },
                            );
                        }
                        HsAction::Established(done) => {
                            self.end = Some(SideEnd::Established(done.mode));
                            self.established = Some(*done);
                        }
                    }
                }
            }
            Err(HandshakeError::PeerAlert(code)) => {
                self.end = Some(SideEnd::PeerAlert(code));
            }
            Err(error) => {
                let alert = error.alert_to_send();
                if let Some(code) = alert {
                    let version = version_for_alert(self.policy);
                    sim.send(
                        NodeId::SlaveSae,
                        NodeId::MasterSae,
                        Payload::Record(encode_alert(code, version)),
                    );
                }
                self.end = Some(SideEnd::Rejected {
                    error: error.to_string(),
                    alert_sent: alert,
                });
            }
        }
    }
}

struct PendingReservation {
    requester: NodeId,
    uuid: KeyUuid,
    material: KeyMaterial,
}

/// A KME node: the real service core behind simulated transport.
pub struct KmeNode {
    id: NodeId,
    core: Arc<KmeCore<InertNotifier>>,
    peer_node: NodeId,
    peer_kme_id: KmeId,
    /// Serial the peer KME presents on inbound activations.
    peer_presents: u64,
    /// SAE registry (serial → id), mirroring the mutual-TLS identity lookup
    /// the HTTP front end performs.
    saes: Vec<(u64, SaeId)>,
    pending: Option<PendingReservation>,
}

impl KmeNode {
    /// Wraps `core` as the node `id`.
    pub fn new(
        id: NodeId,
        core: Arc<KmeCore<InertNotifier>>,
        peer_node: NodeId,
        peer_kme_id: KmeId,
        peer_presents: u64,
    ) -> KmeNode {
        KmeNode {
            id,
            core,
            peer_node,
            peer_kme_id,
            peer_presents,
            saes: vec![(MASTER_SERIAL, MASTER_SAE_ID), (SLAVE_SERIAL, SLAVE_SAE_ID)],
            pending: None,
        }
    }

    fn sae_for(&self, serial: u64) -> Option<SaeId> {
        self.saes
            .iter()
            .find(|(s, _)| *s == serial)
            .map(|(_, id)| *id)
    }

    /// Feeds one delivered message in.
    pub fn on_payload(&mut self, sim: &mut Sim, from: NodeId, payload: Payload) {
        match payload {
            Payload::KmeCall {
                caller_serial,
                call,
            } => self.on_call(sim, from, caller_serial, call),
            Payload::Activate(msg) => {
                let status = match self.core.activate(self.peer_presents, &msg) {
                    Ok(_) => 200,
                    Err(e) => e.status(),
                };
                sim.send(self.id, from, Payload::ActivateAck { status });
            }
            Payload::ActivateAck { status } => {
                let Some(pending) = self.pending.take() else {
                    panic!("activation ack with no reservation in flight");
                };
                let answer = if status == 200 {
                    Payload::KmeAnswer {
                        status: 200,
                        reply: KmeReply::NewKey {
                            key_uuid: pending.uuid,
                            material: pending.material,
                        },
                    }
                } else {
                    // Mirror the service: an unacknowledged activation rolls
                    // the reservation back and fails the request.
                    let _ = self.core.store().cancel_reservation(&pending.uuid);
                    Payload::KmeAnswer {
                        status: 502,
                        reply: KmeReply::Failed(KmeFailure::Protocol(format!(
                            "peer activation failed with status {status}"
                        ))),
                    }
                };
                sim.send(self.id, pending.requester, answer);
            }
            other => panic!("KME received unexpected payload {:?}", other.kind()),
        }
    }

    fn on_call(&mut self, sim: &mut Sim, from: NodeId, caller_serial: u64, call: KmeCall) {
        let answer = match call {
            KmeCall::OwnSaeId => match self.core.sae_info_me(caller_serial) {
                Ok(info) => Payload::KmeAnswer {
                    status: 200,
                    reply: KmeReply::OwnSaeId(info.sae_id),
                },
                Err(e) => failure_answer(&e, FailureRoute::Identity),
            },
            KmeCall::NewKey { slave_sae_id } => {
                let Some(master_sae_id) = self.sae_for(caller_serial) else {
                    sim.send(
                        self.id,
                        from,
                        failure_answer(&ServiceError::Unauthorized, FailureRoute::Identity),
                    );
                    return;
                };
                match self
                    .core
                    .store()
                    .reserve_key(self.peer_kme_id, master_sae_id, slave_sae_id)
                {
                    Ok(reserved) => {
                        // The response waits on the peer's acknowledgement.
                        self.pending = Some(PendingReservation {
                            requester: from,
                            uuid: reserved.uuid,
                            material: reserved.material,
                        });
                        sim.send(
                            self.id,
                            self.peer_node,
                            Payload::Activate(ActivationMsg {
                                key_id: reserved.uuid.to_string(),
                                master_sae_id,
                                slave_sae_id,
                            }),
                        );
                        return;
                    }
                    Err(e) => {
                        let service_error = match e {
                            KeyStoreError::PoolExhausted { .. } => ServiceError::PoolExhausted,
                            other => ServiceError::Internal(other.to_string()),
                        };
                        failure_answer(&service_error, FailureRoute::Delivery)
                    }
                }
            }
            KmeCall::KeyById {
                master_sae_id,
                key_uuid,
            } => match self
                .core
                .dec_keys(caller_serial, master_sae_id, &key_uuid.to_string())
            {
                Ok(container) => match material_from_container(&container) {
                    Some(material) => Payload::KmeAnswer {
                        status: 200,
                        reply: KmeReply::KeyMaterial(material),
                    },
                    None => Payload::KmeAnswer {
                        status: 200,
                        reply: KmeReply::Failed(KmeFailure::Protocol(
                            "undecodable key container".into(),
                        )),
                    },
                },
                Err(e) => failure_answer(&e, FailureRoute::Delivery),
            },
        };
        sim.send(self.id, from, answer);
    }
}

enum FailureRoute {
    /// Identity lookups: a 401 means "this certificate is not registered".
    Identity,
    /// Key operations: a 401 means "not yours".
    Delivery,
}

/// Maps a service error to the HTTP status it would travel as, plus the
/// client-side reading of that status — the same mapping the blocking HTTP
/// client applies.
fn failure_answer(error: &ServiceError, route: FailureRoute) -> Payload {
    let status = error.status();
    let failure = match (status, route) {
        (401, FailureRoute::Identity) => KmeFailure::NotRegistered,
        (401, FailureRoute::Delivery) => KmeFailure::Unauthorized,
        (404, _) => KmeFailure::KeyNotFound,
        (410, _) => KmeFailure::AlreadyConsumed,
        (503, _) => KmeFailure::PoolExhausted,
        _ => KmeFailure::Protocol(error.to_string()),
    };
    Payload::KmeAnswer {
        status,
        reply: KmeReply::Failed(failure),
    }
}

fn material_from_container(container: &qkd_kme::api::KeyContainer) -> Option<KeyMaterial> {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;
    let entry = container.keys.first()?;
    let bytes = BASE64.decode(&entry.key).ok()?;
    let material: [u8; KEY_SIZE_BYTES] = bytes.try_into().ok()?;
    Some(material)
}

/// Everything a finished run exposes for assertions and reports.
pub struct WorldOutcome {
    /// How the master ended.
    pub master_end: SideEnd,
    /// How the slave ended.
    pub slave_end: SideEnd,
    /// Master's session state, when established.
    pub master_established: Option<Established>,
    /// Slave's session state, when established.
    pub slave_established: Option<Established>,
    /// UUID of the key the master reserved, if it got that far.
    pub key_uuid: Option<KeyUuid>,
    /// Last non-success KME status the master saw.
    pub master_kme_error: Option<u16>,
    /// Last non-success KME status the slave saw.
    pub slave_kme_error: Option<u16>,
    /// Alert that arrived after this side had already finished, if any
    /// (master, slave).
    pub late_alerts: (Option<AlertCode>, Option<AlertCode>),
}

/// The four nodes plus the simulator, run to quiescence.
pub struct World {
    /// The event queue and links.
    pub sim: Sim,
    master: MasterNode,
    slave: SlaveNode,
    kme1: KmeNode,
    kme2: KmeNode,
}

/// Hard ceiling on deliveries per run; a handshake takes a few dozen. Hitting
/// it means a message loop, which is a bug worth a loud failure.
const MAX_DELIVERIES: u32 = 10_000;

impl World {
    /// Assembles a world. The KME cores are shared so that consecutive runs
    /// draw down the same key pools.
    pub fn new(
        sim: Sim,
        master: MasterNode,
        slave: SlaveNode,
        kme1: Arc<KmeCore<InertNotifier>>,
        kme2: Arc<KmeCore<InertNotifier>>,
    ) -> World {
        World {
            sim,
            master,
            slave,
            kme1: KmeNode::new(NodeId::Kme1, kme1, NodeId::Kme2, KME2_ID, KME2_SERIAL),
            kme2: KmeNode::new(NodeId::Kme2, kme2, NodeId::Kme1, KME1_ID, KME1_SERIAL),
        }
    }

    /// Runs until no messages remain, then reports.
    pub fn run(mut self) -> (WorldOutcome, Sim) {
        self.master.begin(&mut self.sim);
        let mut deliveries = 0u32;
        while let Some(delivery) = self.sim.pop() {
            deliveries += 1;
            assert!(deliveries <= MAX_DELIVERIES, "simulation did not quiesce");
            match delivery.to {
                NodeId::MasterSae => self.master.on_payload(&mut self.sim, delivery.payload),
                NodeId::SlaveSae => self.slave.on_payload(&mut self.sim, delivery.payload),
                NodeId::Kme1 => {
                    self.kme1
                        .on_payload(&mut self.sim, delivery.from, delivery.payload)
                }
                NodeId::Kme2 => {
                    self.kme2
                        .on_payload(&mut self.sim, delivery.from, delivery.payload)
                }
            }
        }
        let outcome = WorldOutcome {
            master_end: self.master.end.unwrap_or(SideEnd::Unresolved),
            slave_end: self.slave.end.unwrap_or(SideEnd::Unresolved),
            master_established: self.master.established,
            slave_established: self.slave.established,
            key_uuid: self.master.key_uuid,
            master_kme_error: self.master.last_kme_error,
            slave_kme_error: self.slave.last_kme_error,
            late_alerts: (self.master.late_peer_alert, self.slave.late_peer_alert),
        };
        (outcome, self.sim)
    }
}
