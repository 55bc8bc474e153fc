//! The slave (TLS server) handshake machine.

use qkd_keystore::KeyMaterial;

use crate::challenge::{build_challenge, verify_challenge_ack, IssuedChallenge};
use crate::classical::{derive_classical_keys, finished_mac, ClassicalKeys, EphemeralShare};
use crate::consts::{
    BASE_IV_LEN, PROTOCOL_VERSION_CLASSICAL, PROTOCOL_VERSION_QKD, REC_ALERT, REC_CHALLENGE_ACK,
    REC_HANDSHAKE,
};
use crate::kme::{KmeReply, KmeRequest};
use crate::nonce::Direction;
use crate::record::RecordProtection;
use crate::rng::{random_array, HandshakeRng};
use crate::wire::{
    decode_alert, decode_challenge_ack, decode_client_hello, decode_finished, encode_server_hello,
    peek_content_type, ClientHello, QkdHello, ServerHello,
};

use super::{
    Established, EstablishedMode, HandshakeError, HsAction, ModePolicy, Phase, SlaveConfig,
};

enum State {
    Idle,
    AwaitKey {
        qkd: QkdHello,
    },
    AckWait {
        key: KeyMaterial,
        base_iv: [u8; BASE_IV_LEN],
        issued: IssuedChallenge,
    },
    AwaitFinished {
        keys: ClassicalKeys,
        transcript: Vec<u8>,
    },
    Terminal,
}

/// Sans-io handshake machine for the server role. It speaks only when spoken
/// to: feed it the ClientHello record and then every subsequent input until
/// an [`HsAction::Established`] appears or an error ends the handshake.
pub struct SlaveHandshake {
    config: SlaveConfig,
    rng: Box<dyn HandshakeRng>,
    state: State,
    phase: Phase,
}

impl SlaveHandshake {
    /// Creates a machine awaiting a ClientHello.
    pub fn new(config: SlaveConfig, rng: Box<dyn HandshakeRng>) -> SlaveHandshake {
        SlaveHandshake {
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
            State::Idle => self.on_client_hello(record),
            State::AckWait {
                key,
                base_iv,
                issued,
            } => self.on_ack(record, key, base_iv, issued),
            State::AwaitFinished { keys, transcript } => {
                self.on_finished(record, keys, transcript)
            }
            State::AwaitKey { .. } => self.fail(HandshakeError::Protocol(
                "record arrived while the key retrieval is pending".to_string(),
            )),
            State::Terminal => self.fail(HandshakeError::Protocol(
                "no record is expected in this phase".to_string(),
            )),
        }
    }

    fn on_client_hello(&mut self, record: &[u8]) -> Result<Vec<HsAction>, HandshakeError> {
        if peek_content_type(record).map_err(HandshakeError::Wire)? != REC_HANDSHAKE {
            return self.fail(HandshakeError::Protocol(
                "expected a client hello first".to_string(),
            ));
        }
        let hello = match decode_client_hello(record) {
            Ok(h) => h,
            Err(e) => return self.fail(e.into()),
        };
        match (&hello.qkd, self.config.policy) {
            (Some(qkd), ModePolicy::QkdPreferred | ModePolicy::QkdOnly) => {
                let request = KmeRequest::KeyById {
                    master_sae_id: qkd.master_sae_id,
                    key_uuid: qkd.key_uuid,
                };
                self.state = State::AwaitKey { qkd: *qkd };
                Ok(vec![HsAction::KmeRequest(request)])
            }
            (Some(_), ModePolicy::ClassicalOnly) | (None, ModePolicy::QkdPreferred) => {
                // Either this endpoint ignores the QKD offer (it has no KME)
                // or the client never made one: classical handshake.
                self.classical_server_hello(&hello, record)
            }
            (None, ModePolicy::ClassicalOnly) => self.classical_server_hello(&hello, record),
            (None, ModePolicy::QkdOnly) => self.fail(HandshakeError::DowngradeRefused),
        }
    }

    fn classical_server_hello(
        &mut self,
        hello: &ClientHello,
        ch_record: &[u8],
    ) -> Result<Vec<HsAction>, HandshakeError> {
        let Some(client_share) = hello.key_share else {
            return self.fail(HandshakeError::Protocol(
                "client offers no usable key exchange".to_string(),
            ));
        };
        let dh = EphemeralShare::generate(self.rng.as_mut());
        let Some(shared) = dh.agree(&client_share) else {
            return self.fail(HandshakeError::Protocol(
                "client key share is not contributory".to_string(),
            ));
        };
        let server_random = random_array(self.rng.as_mut());
        let server_hello = ServerHello {
            version: PROTOCOL_VERSION_CLASSICAL,
            random: server_random,
            challenge: None,
            key_share: Some(dh.public),
        };
        let sh_record = encode_server_hello(&server_hello);
        let keys = derive_classical_keys(&shared, &hello.random, &server_random);
        let mut transcript = ch_record.to_vec();
        transcript.extend_from_slice(&sh_record);
        self.state = State::AwaitFinished { keys, transcript };
        self.phase = Phase::HelloSent;
        Ok(vec![HsAction::SendRecord(sh_record)])
    }

    /// Feeds back the reply to the pending key retrieval.
    pub fn on_kme_reply(&mut self, reply: KmeReply) -> Result<Vec<HsAction>, HandshakeError> {
        self.terminal_guard()?;
        match std::mem::replace(&mut self.state, State::Terminal) {
            State::AwaitKey { qkd } => match reply {
                KmeReply::KeyMaterial(material) => {
                    let (issued, challenge_ct) =
                        build_challenge(&material, &qkd.base_iv, self.rng.as_mut());
                    let server_hello = ServerHello {
                        version: PROTOCOL_VERSION_QKD,
                        random: random_array(self.rng.as_mut()),
                        challenge: Some(challenge_ct),
                        key_share: None,
                    };
                    self.state = State::AckWait {
                        key: material,
                        base_iv: qkd.base_iv,
                        issued,
                    };
                    self.phase = Phase::ChallengeSent;
                    Ok(vec![HsAction::SendRecord(encode_server_hello(
                        &server_hello,
                    ))])
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

    fn on_ack(
        &mut self,
        record: &[u8],
        key: KeyMaterial,
        base_iv: [u8; BASE_IV_LEN],
        issued: IssuedChallenge,
    ) -> Result<Vec<HsAction>, HandshakeError> {
        if peek_content_type(record).map_err(HandshakeError::Wire)? != REC_CHALLENGE_ACK {
            return self.fail(HandshakeError::Protocol(
                "expected the challenge ack next".to_string(),
            ));
        }
        let ack_ct = match decode_challenge_ack(record) {
            Ok(ct) => ct,
            Err(e) => return self.fail(e.into()),
        };
        if let Err(e) = verify_challenge_ack(&issued, &key, &base_iv, &ack_ct) {
            return self.fail(e);
        }
        let protection = RecordProtection::new(
            &key,
            base_iv,
            Direction::SlaveToMaster,
            PROTOCOL_VERSION_QKD,
        );
        self.state = State::Terminal;
        self.phase = Phase::Established;
        Ok(vec![HsAction::Established(Box::new(Established {
            mode: EstablishedMode::TlsQkd,
            protection,
        }))])
    }

    fn on_finished(
        &mut self,
        record: &[u8],
        keys: ClassicalKeys,
        transcript: Vec<u8>,
    ) -> Result<Vec<HsAction>, HandshakeError> {
        if peek_content_type(record).map_err(HandshakeError::Wire)? != REC_HANDSHAKE {
            return self.fail(HandshakeError::Protocol(
                "expected the finished message next".to_string(),
            ));
        }
        let verify_data = match decode_finished(record) {
            Ok(v) => v,
            Err(e) => return self.fail(e.into()),
        };
        let expected = finished_mac(&keys.finished_key, &transcript);
        if verify_data != expected {
            return self.fail(HandshakeError::BadAuth);
        }
        let protection = RecordProtection::new(
            &keys.key,
            keys.base_iv,
            Direction::SlaveToMaster,
            PROTOCOL_VERSION_CLASSICAL,
        );
        self.state = State::Terminal;
        self.phase = Phase::FallbackClassical;
        Ok(vec![HsAction::Established(Box::new(Established {
            mode: EstablishedMode::Classical,
            protection,
        }))])
    }

    fn fail(&mut self, error: HandshakeError) -> Result<Vec<HsAction>, HandshakeError> {
        // Dropping the state discards any key material the machine held.
        self.state = State::Terminal;
        self.phase = Phase::Failed;
        Err(error)
    }
}
