//! The master (TLS client) handshake machine.

use qkd_keystore::{KeyMaterial, KeyUuid, SaeId};

use crate::challenge::answer_challenge;
use crate::classical::{derive_classical_keys, finished_mac, EphemeralShare};
use crate::consts::{
    BASE_IV_LEN, PROTOCOL_VERSION_CLASSICAL, PROTOCOL_VERSION_QKD, REC_ALERT, REC_HANDSHAKE,
};
use crate::kme::{KmeReply, KmeRequest};
use crate::nonce::Direction;
use crate::record::RecordProtection;
use crate::rng::{random_array, HandshakeRng};
use crate::wire::{
    decode_alert, decode_server_hello, encode_challenge_ack, encode_client_hello, encode_finished,
    peek_content_type, ClientHello, QkdHello,
};

use super::{
    Established, EstablishedMode, HandshakeError, HsAction, MasterConfig, ModePolicy, Phase,
};

struct QkdOffer {
    key: KeyMaterial,
    base_iv: [u8; BASE_IV_LEN],
}

enum State {
    Idle,
    AwaitOwnSaeId,
    AwaitNewKey {
        own_sae_id: SaeId,
    },
    HelloSent {
        qkd: Option<QkdOffer>,
        dh: EphemeralShare,
        client_random: [u8; 32],
        hello_record: Vec<u8>,
    },
    Terminal,
}

/// Sans-io handshake machine for the client role. Drive it with
/// [`MasterHandshake::start`], then feed records and KME replies until an
/// [`HsAction::Established`] appears or an error ends the handshake.
pub struct MasterHandshake {
    config: MasterConfig,
    rng: Box<dyn HandshakeRng>,
    state: State,
    phase: Phase,
}

impl MasterHandshake {
    /// Creates a machine; nothing happens until [`MasterHandshake::start`].
    pub fn new(config: MasterConfig, rng: Box<dyn HandshakeRng>) -> MasterHandshake {
        MasterHandshake {
            config,
            rng,
            state: State::Idle,
            phase: Phase::Start,
        }
    }

    /// Current coarse phase.
    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Rejects input once the machine is terminal, without disturbing the
    /// phase: an established machine stays established, a failed one failed.
    fn terminal_guard(&self) -> Result<(), HandshakeError> {
        match self.phase {
            Phase::Established | Phase::FallbackClassical => Err(HandshakeError::Protocol(
                "handshake already complete".to_string(),
            )),
            Phase::Failed => Err(HandshakeError::Protocol(
                "handshake already failed".to_string(),
            )),
            _ => Ok(()),
        }
    }

    /// Begins the handshake. A classical-only master emits its ClientHello
    /// immediately; a QKD-capable master first asks the KME for its own SAE
    /// id, then for a fresh key.
    pub fn start(&mut self) -> Result<Vec<HsAction>, HandshakeError> {
        self.terminal_guard()?;
        let State::Idle = self.state else {
            return self.fail(HandshakeError::Protocol(
                "handshake already started".to_string(),
            ));
        };
        match self.config.policy {
            ModePolicy::ClassicalOnly => {
                let dh = EphemeralShare::generate(self.rng.as_mut());
                let client_random = random_array(self.rng.as_mut());
                let hello = ClientHello {
                    version: PROTOCOL_VERSION_CLASSICAL,
                    random: client_random,
                    qkd: None,
                    key_share: Some(dh.public),
                };
                let record = encode_client_hello(&hello);
                self.state = State::HelloSent {
                    qkd: None,
                    dh,
                    client_random,
                    hello_record: record.clone(),
                };
                self.phase = Phase::HelloSent;
                Ok(vec![HsAction::SendRecord(record)])
            }
            ModePolicy::QkdPreferred | ModePolicy::QkdOnly => {
                if self.config.slave_sae_id.is_none() {
                    return self.fail(HandshakeError::Internal(
                        "QKD policy requires the peer SAE id".to_string(),
                    ));
                }
                self.state = State::AwaitOwnSaeId;
                Ok(vec![HsAction::KmeRequest(KmeRequest::OwnSaeId)])
            }
        }
    }

    /// Feeds back the reply to the pending KME request.
    pub fn on_kme_reply(&mut self, reply: KmeReply) -> Result<Vec<HsAction>, HandshakeError> {
        self.terminal_guard()?;
        match std::mem::replace(&mut self.state, State::Terminal) {
            State::AwaitOwnSaeId => match reply {
                KmeReply::OwnSaeId(own_sae_id) => {
                    let slave = self.config.slave_sae_id.expect("checked in start");
                    self.state = State::AwaitNewKey { own_sae_id };
                    Ok(vec![HsAction::KmeRequest(KmeRequest::NewKey {
                        slave_sae_id: slave,
                    })])
                }
                KmeReply::Failed(f) => self.fail(f.into()),
                _ => self.fail(HandshakeError::Protocol(
                    "KME reply does not match the pending request".to_string(),
                )),
            },
            State::AwaitNewKey { own_sae_id } => match reply {
                KmeReply::NewKey { key_uuid, material } => {
                    Ok(self.send_qkd_hello(own_sae_id, key_uuid, material))
                }
                KmeReply::Failed(f) => self.fail(f.into()),
                _ => self.fail(HandshakeError::Protocol(
                    "KME reply does not match the pending request".to_string(),
                )),
            },
            _ => self.fail(HandshakeError::Protocol(
                "no KME operation is pending".to_string(),
            )),
        }
    }

    fn send_qkd_hello(
        &mut self,
        own_sae_id: SaeId,
        key_uuid: KeyUuid,
        material: KeyMaterial,
    ) -> Vec<HsAction> {
        let dh = EphemeralShare::generate(self.rng.as_mut());
        let client_random = random_array(self.rng.as_mut());
        let base_iv = random_array(self.rng.as_mut());
        let hello = ClientHello {
            version: PROTOCOL_VERSION_QKD,
            random: client_random,
            qkd: Some(QkdHello {
                master_sae_id: own_sae_id,
                key_uuid,
                base_iv,
            }),
            key_share: Some(dh.public),
        };
        let record = encode_client_hello(&hello);
        self.state = State::HelloSent {
            qkd: Some(QkdOffer {
                key: material,
                base_iv,
            }),
            dh,
            client_random,
            hello_record: record.clone(),
        };
        self.phase = Phase::HelloSent;
        vec![HsAction::SendRecord(record)]
    }

    /// Feeds one complete record from the peer.
    pub fn on_record(&mut self, record: &[u8]) -> Result<Vec<HsAction>, HandshakeError> {
        self.terminal_guard()?;
        if peek_content_type(record).map_err(HandshakeError::Wire)? == REC_ALERT {
            let code = match decode_alert(record) {
                Ok(c) => c,
                Err(e) => return self.fail(e.into()),
            };
            return self.fail(HandshakeError::PeerAlert(code));
        }
        match std::mem::replace(&mut self.state, State::Terminal) {
            State::HelloSent {
                qkd,
                dh,
                client_random,
                hello_record,
            } => self.on_server_hello(record, qkd, dh, client_random, hello_record),
            _ => self.fail(HandshakeError::Protocol(
                "no record is expected in this phase".to_string(),
            )),
        }
    }

    fn on_server_hello(
        &mut self,
        record: &[u8],
        qkd: Option<QkdOffer>,
        dh: EphemeralShare,
        client_random: [u8; 32],
        hello_record: Vec<u8>,
    ) -> Result<Vec<HsAction>, HandshakeError> {
        if peek_content_type(record).map_err(HandshakeError::Wire)? != REC_HANDSHAKE {
            return self.fail(HandshakeError::Protocol(
                "expected the server hello next".to_string(),
            ));
        }
        let hello = match decode_server_hello(record) {
            Ok(h) => h,
            Err(e) => return self.fail(e.into()),
        };
        match hello.challenge {
            Some(challenge_ct) => {
                let Some(offer) = qkd else {
                    return self.fail(HandshakeError::Protocol(
                        "server sent a challenge to a classical client".to_string(),
                    ));
                };
                let answer = match answer_challenge(
                    &offer.key,
                    &offer.base_iv,
                    &challenge_ct,
                    self.rng.as_mut(),
                ) {
                    Ok(a) => a,
                    Err(e) => return self.fail(e),
                };
                let protection = RecordProtection::new(
                    &offer.key,
                    offer.base_iv,
                    Direction::MasterToSlave,
                    PROTOCOL_VERSION_QKD,
                );
                self.state = State::Terminal;
                self.phase = Phase::Established;
                Ok(vec![
                    HsAction::SendRecord(encode_challenge_ack(&answer.ciphertext)),
                    HsAction::Established(Box::new(Established {
                        mode: EstablishedMode::TlsQkd,
                        protection,
                    })),
                ])
            }
            None => {
                if self.config.policy == ModePolicy::QkdOnly {
                    return self.fail(HandshakeError::DowngradeRefused);
                }
                let Some(server_share) = hello.key_share else {
                    return self.fail(HandshakeError::Protocol(
                        "classical server hello without a key share".to_string(),
                    ));
                };
                let Some(shared) = dh.agree(&server_share) else {
                    return self.fail(HandshakeError::Protocol(
                        "server key share is not contributory".to_string(),
                    ));
                };
                let keys = derive_classical_keys(&shared, &client_random, &hello.random);
                let mut transcript = hello_record;
                transcript.extend_from_slice(record);
                let verify_data = finished_mac(&keys.finished_key, &transcript);
                let protection = RecordProtection::new(
                    &keys.key,
                    keys.base_iv,
                    Direction::MasterToSlave,
                    PROTOCOL_VERSION_CLASSICAL,
                );
                self.state = State::Terminal;
                self.phase = Phase::FallbackClassical;
                Ok(vec![
                    HsAction::SendRecord(encode_finished(&verify_data)),
                    HsAction::Established(Box::new(Established {
                        mode: EstablishedMode::Classical,
                        protection,
                    })),
                ])
            }
        }
    }

    fn fail(&mut self, error: HandshakeError) -> Result<Vec<HsAction>, HandshakeError> {
        // Dropping the state discards any key material the machine held.
        self.state = State::Terminal;
        self.phase = Phase::Failed;
        Err(error)
    }
}
