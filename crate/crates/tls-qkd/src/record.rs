//! AEAD protection of post-handshake records.
//!
//! Application data is sealed with AES-256-GCM under the session key (the
//! quantum key on the QKD path, the derived DH key on the classical path).
//! Each direction keeps its own sequence counter starting at 1 — sequence 0
//! belongs to the challenge exchange — and the 5-byte record header is bound
//! as AAD, so a record cannot be truncated, retyped, reordered, or replayed
//! without failing authentication.

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use qkd_keystore::KeyMaterial;

use crate::consts::{
    AEAD_TAG_LEN, BASE_IV_LEN, MAX_RECORD_BODY, MAX_RECORD_PLAINTEXT, RECORD_HEADER_LEN,
};
use crate::nonce::{derive_nonce, Direction};
use crate::wire::{decode_single_record, RecordHeader};

/// Record protection failures.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RecordError {
    /// Authentication failed: tampering, truncation, reordering, or a replay.
    #[error("record failed authentication")]
    BadAuth,
    /// Structurally invalid record.
    #[error("malformed record: {0}")]
    Malformed(String),
    /// The record's version field does not match this connection.
    #[error("record version {got:#06x} does not match connection version {expected:#06x}")]
    WrongVersion {
        /// Version found on the wire.
        got: u16,
        /// Version negotiated for this connection.
        expected: u16,
    },
    /// Plaintext too large for a single record; callers fragment first.
    #[error("plaintext exceeds the per-record maximum")]
    Oversized,
    /// The 64-bit sequence space is exhausted; the connection must end.
    #[error("record sequence counter exhausted")]
    CounterExhausted,
}

/// Sealing/opening state for one direction pair of a connection.
pub struct RecordProtection {
    cipher: Aes256Gcm,
    base_iv: [u8; BASE_IV_LEN],
    send_direction: Direction,
    version: u16,
    send_seq: u64,
    recv_seq: u64,
}

impl RecordProtection {
    /// Creates protection state for one endpoint. `send_direction` is the
    /// direction of records this endpoint *sends*; both sequence counters
    /// start at 1.
    pub fn new(
        key: &KeyMaterial,
        base_iv: [u8; BASE_IV_LEN],
        send_direction: Direction,
        version: u16,
    ) -> RecordProtection {
        RecordProtection {
            cipher: Aes256Gcm::new_from_slice(key).expect("256-bit key"),
            base_iv,
            send_direction,
            version,
            send_seq: 1,
            recv_seq: 1,
        }
    }

    /// Connection protocol version stamped on every record.
    pub fn version(&self) -> u16 {
        self.version
    }

    /// Next sequence number this endpoint will send with.
    pub fn send_seq(&self) -> u64 {
        self.send_seq
    }

    /// Next sequence number expected from the peer.
    pub fn recv_seq(&self) -> u64 {
        self.recv_seq
    }

    /// Seals `plaintext` into a full record (header included).
    pub fn seal(&mut self, content_type: u8, plaintext: &[u8]) -> Result<Vec<u8>, RecordError> {
        if plaintext.len() > MAX_RECORD_PLAINTEXT {
            return Err(RecordError::Oversized);
        }
        if self.send_seq == u64::MAX {
            return Err(RecordError::CounterExhausted);
        }
        let header = RecordHeader {
            content_type,
            version: self.version,
            length: (plaintext.len() + AEAD_TAG_LEN) as u16,
        };
        let aad = header.encode();
        let nonce = derive_nonce(&self.base_iv, self.send_direction, self.send_seq);
        let ciphertext = self
            .cipher
            .encrypt(
                &Nonce::from(nonce),
                Payload {
                    msg: plaintext,
                    aad: &aad,
                },
            )
            .expect("AES-GCM encryption is infallible for in-memory buffers");
        self.send_seq += 1;
        let mut record = Vec::with_capacity(RECORD_HEADER_LEN + ciphertext.len());
        record.extend_from_slice(&aad);
        record.extend_from_slice(&ciphertext);
        Ok(record)
    }

    /// Opens a full record, returning its content type and plaintext.
    pub fn open(&mut self, record: &[u8]) -> Result<(u8, Vec<u8>), RecordError> {
        let (header, body) = decode_single_record(record)
            .map_err(|e| RecordError::Malformed(e.to_string()))?;
        if header.version != self.version {
            return Err(RecordError::WrongVersion {
                got: header.version,
                expected: self.version,
            });
        }
        if body.len() < AEAD_TAG_LEN || body.len() > MAX_RECORD_BODY {
            return Err(RecordError::Malformed(
                "protected record body has impossible length".to_string(),
            ));
        }
        if self.recv_seq == u64::MAX {
            return Err(RecordError::CounterExhausted);
        }
        let aad = header.encode();
        let nonce = derive_nonce(&self.base_iv, self.send_direction.flip(), self.recv_seq);
        let plaintext = self
            .cipher
            .decrypt(
                &Nonce::from(nonce),
                Payload {
                    msg: body,
                    aad: &aad,
                },
            )
            .map_err(|_| RecordError::BadAuth)?;
        self.recv_seq += 1;
        Ok((header.content_type, plaintext))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::{PROTOCOL_VERSION_CLASSICAL, PROTOCOL_VERSION_QKD, REC_APPLICATION_DATA};

    const KEY: KeyMaterial = [0x11; 32];
    const IV: [u8; 12] = [0x22; 12];

    fn pair() -> (RecordProtection, RecordProtection) {
        (
            RecordProtection::new(&KEY, IV, Direction::MasterToSlave, PROTOCOL_VERSION_QKD),
            RecordProtection::new(&KEY, IV, Direction::SlaveToMaster, PROTOCOL_VERSION_QKD),
        )
    }

    #[test]
    fn seal_open_roundtrip_both_directions() {
        let (mut master, mut slave) = pair();
        let a = master.seal(REC_APPLICATION_DATA, b"to the slave").unwrap();
        let (ty, pt) = slave.open(&a).unwrap();
        assert_eq!((ty, pt.as_slice()), (REC_APPLICATION_DATA, &b"to the slave"[..]));
        let b = slave.seal(REC_APPLICATION_DATA, b"to the master").unwrap();
        let (ty, pt) = master.open(&b).unwrap();
        assert_eq!((ty, pt.as_slice()), (REC_APPLICATION_DATA, &b"to the master"[..]));
    }

    #[test]
    fn sequence_counters_start_at_one_and_advance() {
        let (mut master, mut slave) = pair();
        assert_eq!(master.send_seq(), 1);
        for i in 0..5u64 {
            let rec = master.seal(REC_APPLICATION_DATA, &i.to_be_bytes()).unwrap();
            slave.open(&rec).unwrap();
        }
        assert_eq!(master.send_seq(), 6);
        assert_eq!(slave.recv_seq(), 6);
    }

    #[test]
    fn any_single_bit_flip_in_the_body_fails_auth() {
        let (mut master, _) = pair();
        let rec = master.seal(REC_APPLICATION_DATA, b"sensitive").unwrap();
        for bit in 0..8 {
            let (_, mut slave) = pair();
            let mut tampered = rec.clone();
            let idx = RECORD_HEADER_LEN + 3;
            tampered[idx] ^= 1 << bit;
            assert_eq!(slave.open(&tampered).unwrap_err(), RecordError::BadAuth);
        }
    }

    #[test]
    fn header_is_bound_as_aad() {
        let (mut master, mut slave) = pair();
        let rec = master.seal(REC_APPLICATION_DATA, b"retype me").unwrap();
        let mut retyped = rec.clone();
        retyped[0] = 0x16;
        assert_eq!(slave.open(&retyped).unwrap_err(), RecordError::BadAuth);
    }

    #[test]
    fn version_mismatch_is_rejected_before_decryption() {
        let (mut master, _) = pair();
        let rec = master.seal(REC_APPLICATION_DATA, b"x").unwrap();
        let mut classical_slave =
            RecordProtection::new(&KEY, IV, Direction::SlaveToMaster, PROTOCOL_VERSION_CLASSICAL);
        assert!(matches!(
            classical_slave.open(&rec).unwrap_err(),
            RecordError::WrongVersion { got, expected }
                if got == PROTOCOL_VERSION_QKD && expected == PROTOCOL_VERSION_CLASSICAL
        ));
    }

    #[test]
    fn reordered_records_fail_auth() {
        let (mut master, mut slave) = pair();
        let first = master.seal(REC_APPLICATION_DATA, b"first").unwrap();
        let second = master.seal(REC_APPLICATION_DATA, b"second").unwrap();
        // Delivering the second record first: the nonce for recv_seq=1 does
        // not match a record sealed at seq=2.
        assert_eq!(slave.open(&second).unwrap_err(), RecordError::BadAuth);
        // The counter did not advance on failure; the true first still opens.
        let (_, pt) = slave.open(&first).unwrap();
        assert_eq!(pt, b"first");
    }

    #[test]
    fn replayed_record_fails_auth() {
        let (mut master, mut slave) = pair();
        let rec = master.seal(REC_APPLICATION_DATA, b"once only").unwrap();
        slave.open(&rec).unwrap();
        assert_eq!(slave.open(&rec).unwrap_err(), RecordError::BadAuth);
    }

    #[test]
    fn truncated_record_is_malformed() {
        let (mut master, mut slave) = pair();
        let rec = master.seal(REC_APPLICATION_DATA, b"truncate").unwrap();
        assert!(matches!(
            slave.open(&rec[..rec.len() - 1]).unwrap_err(),
            RecordError::Malformed(_)
        ));
        assert!(matches!(
            slave.open(&rec[..3]).unwrap_err(),
            RecordError::Malformed(_)
        ));
    }

    #[test]
    fn oversized_plaintext_is_refused() {
        let (mut master, _) = pair();
        let big = vec![0u8; MAX_RECORD_PLAINTEXT + 1];
        assert_eq!(
            master.seal(REC_APPLICATION_DATA, &big).unwrap_err(),
            RecordError::Oversized
        );
        let exact = vec![0u8; MAX_RECORD_PLAINTEXT];
        assert!(master.seal(REC_APPLICATION_DATA, &exact).is_ok());
    }

    #[test]
    fn different_keys_cannot_talk() {
        let (mut master, _) = pair();
        let mut wrong_key = KEY;
        wrong_key[16] ^= 0xFF;
        let mut slave =
            RecordProtection::new(&wrong_key, IV, Direction::SlaveToMaster, PROTOCOL_VERSION_QKD);
        let rec = master.seal(REC_APPLICATION_DATA, b"hello").unwrap();
        assert_eq!(slave.open(&rec).unwrap_err(), RecordError::BadAuth);
    }
}
