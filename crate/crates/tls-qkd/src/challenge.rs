//! Key-confirmation challenge/response.
//!
//! Holding the same 256-bit key as the peer is the entire basis of a TLS-QKD
//! session, so the handshake proves it in both directions before any
//! application data flows:
//!
//! 1. The slave encrypts `token ‖ seed` (32 random bytes each) under the
//!    quantum key with the slave→master sequence-0 nonce and ships the
//!    80-byte ciphertext in its ServerHello.
//! 2. The master decrypts it — failure here means the two KMEs delivered
//!    different keys — and answers with `token ‖ fresh_seed` under the
//!    master→slave sequence-0 nonce.
//! 3. The slave accepts only if the answer authenticates, returns the token
//!    it issued, and carries a seed *different* from the one it sent. The
//!    token proves the master decrypted this challenge; the fresh seed proves
//!    the answer is not the challenge (or a recording of it) played back.
//!
//! Both ciphertexts use an empty AAD: nothing about them is bound to record
//! headers, since the challenge travels inside a hello extension and the ack
//! in its own record type.

use std::fmt;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use qkd_keystore::KeyMaterial;

use crate::consts::{BASE_IV_LEN, CHALLENGE_CIPHERTEXT_LEN, CHALLENGE_PLAINTEXT_LEN};
use crate::handshake::HandshakeError;
use crate::nonce::{derive_nonce, Direction};
use crate::rng::{random_array, HandshakeRng};

/// Length of the challenge token.
pub const TOKEN_LEN: usize = 32;

/// Length of the challenge seed.
pub const SEED_LEN: usize = 32;

/// What the slave remembers about a challenge it issued.
#[derive(Clone)]
pub struct IssuedChallenge {
    /// Token the answer must return.
    pub token: [u8; TOKEN_LEN],
    /// Seed the answer must *not* return.
    pub seed: [u8; SEED_LEN],
}

/// The master's decrypted view of a challenge, plus its answer.
#[derive(Clone)]
pub struct ChallengeAnswer {
    /// Token received and echoed back.
    pub token: [u8; TOKEN_LEN],
    /// Seed received from the slave.
    pub received_seed: [u8; SEED_LEN],
    /// Fresh seed chosen for the answer.
    pub fresh_seed: [u8; SEED_LEN],
    /// The 80-byte ack ciphertext.
    pub ciphertext: [u8; CHALLENGE_CIPHERTEXT_LEN],
}

impl fmt::Debug for ChallengeAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Seeds stay out of logs: the fresh seed is the replay secret.
        f.debug_struct("ChallengeAnswer")
            .field("token", &hex_prefix(&self.token))
            .field("received_seed", &"<redacted>")
            .field("fresh_seed", &"<redacted>")
            .finish_non_exhaustive()
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..4.min(bytes.len())]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>()
        + "…"
}

fn cipher_for(key: &KeyMaterial) -> Aes256Gcm {
    Aes256Gcm::new_from_slice(key).expect("256-bit key")
}

/// Seals `token ‖ seed` under `key` with the given nonce and empty AAD.
/// Exposed so adversarial harnesses can construct their own (mis)built
/// challenge messages.
pub fn seal_challenge_body(
    key: &KeyMaterial,
    nonce: &[u8; BASE_IV_LEN],
    token: &[u8; TOKEN_LEN],
    seed: &[u8; SEED_LEN],
) -> [u8; CHALLENGE_CIPHERTEXT_LEN] {
    let mut plaintext = [0u8; CHALLENGE_PLAINTEXT_LEN];
    plaintext[..TOKEN_LEN].copy_from_slice(token);
    plaintext[TOKEN_LEN..].copy_from_slice(seed);
    let ciphertext = cipher_for(key)
        .encrypt(
            &Nonce::from(*nonce),
            Payload {
                msg: &plaintext,
                aad: b"",
            },
        )
        .expect("AES-GCM encryption is infallible for in-memory buffers");
    ciphertext
        .as_slice()
        .try_into()
        .expect("64-byte plaintext seals to 80 bytes")
}

/// Opens an 80-byte challenge body. `None` on authentication failure.
pub fn open_challenge_body(
    key: &KeyMaterial,
    nonce: &[u8; BASE_IV_LEN],
    ciphertext: &[u8; CHALLENGE_CIPHERTEXT_LEN],
) -> Option<([u8; TOKEN_LEN], [u8; SEED_LEN])> {
    let plaintext = cipher_for(key)
        .decrypt(
            &Nonce::from(*nonce),
            Payload {
                msg: ciphertext,
                aad: b"",
            },
        )
        .ok()?;
    debug_assert_eq!(plaintext.len(), CHALLENGE_PLAINTEXT_LEN);
    let token = plaintext[..TOKEN_LEN].try_into().ok()?;
    let seed = plaintext[TOKEN_LEN..].try_into().ok()?;
    Some((token, seed))
}

/// Slave side: builds a fresh challenge for the ServerHello.
pub fn build_challenge(
    key: &KeyMaterial,
    base_iv: &[u8; BASE_IV_LEN],
    rng: &mut dyn HandshakeRng,
) -> (IssuedChallenge, [u8; CHALLENGE_CIPHERTEXT_LEN]) {
    let token = random_array(rng);
    let seed = random_array(rng);
    let nonce = derive_nonce(base_iv, Direction::SlaveToMaster, 0);
    let ciphertext = seal_challenge_body(key, &nonce, &token, &seed);
    (IssuedChallenge { token, seed }, ciphertext)
}

/// Master side: decrypts the challenge and builds the ack.
///
/// # Errors
///
/// [`HandshakeError::WrongQuantumKey`] when the challenge does not
/// authenticate under `key` — the canonical symptom of the two KMEs having
/// delivered different keys.
pub fn answer_challenge(
    key: &KeyMaterial,
    base_iv: &[u8; BASE_IV_LEN],
    challenge_ct: &[u8; CHALLENGE_CIPHERTEXT_LEN],
    rng: &mut dyn HandshakeRng,
) -> Result<ChallengeAnswer, HandshakeError> {
    let challenge_nonce = derive_nonce(base_iv, Direction::SlaveToMaster, 0);
    let (token, received_seed) = open_challenge_body(key, &challenge_nonce, challenge_ct)
        .ok_or(HandshakeError::WrongQuantumKey)?;
    let mut fresh_seed: [u8; SEED_LEN] = random_array(rng);
    while fresh_seed == received_seed {
        // A 2^-256 event, but the freshness rule is absolute.
        fresh_seed = random_array(rng);
    }
    let ack_nonce = derive_nonce(base_iv, Direction::MasterToSlave, 0);
    let ciphertext = seal_challenge_body(key, &ack_nonce, &token, &fresh_seed);
    Ok(ChallengeAnswer {
        token,
        received_seed,
        fresh_seed,
        ciphertext,
    })
}

/// Slave side: verifies the master's ack against the issued challenge.
///
/// # Errors
///
/// In order of precedence: [`HandshakeError::BadAuth`] when the ack does not
/// authenticate under the key and the master→slave sequence-0 nonce (this is
/// also what a reflected challenge produces, since it was sealed for the
/// other direction); [`HandshakeError::TokenMismatch`] when it returns a
/// different token; [`HandshakeError::SeedReplayed`] when it returns the
/// challenge's own seed.
pub fn verify_challenge_ack(
    issued: &IssuedChallenge,
    key: &KeyMaterial,
    base_iv: &[u8; BASE_IV_LEN],
    ack_ct: &[u8; CHALLENGE_CIPHERTEXT_LEN],
) -> Result<(), HandshakeError> {
    let ack_nonce = derive_nonce(base_iv, Direction::MasterToSlave, 0);
    let (token, seed) =
        open_challenge_body(key, &ack_nonce, ack_ct).ok_or(HandshakeError::BadAuth)?;
    if token != issued.token {
        return Err(HandshakeError::TokenMismatch);
    }
    if seed == issued.seed {
        return Err(HandshakeError::SeedReplayed);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    const KEY: KeyMaterial = [0x42; 32];
    const IV: [u8; 12] = [0x99; 12];

    #[test]
    fn honest_roundtrip_accepts() {
        let mut r = rng(1);
        let (issued, challenge_ct) = build_challenge(&KEY, &IV, &mut r);
        let answer = answer_challenge(&KEY, &IV, &challenge_ct, &mut r).unwrap();
        assert_eq!(answer.token, issued.token);
        assert_eq!(answer.received_seed, issued.seed);
        assert_ne!(answer.fresh_seed, issued.seed);
        verify_challenge_ack(&issued, &KEY, &IV, &answer.ciphertext).unwrap();
    }

    #[test]
    fn wrong_key_cannot_read_the_challenge() {
        let mut r = rng(2);
        let (_, challenge_ct) = build_challenge(&KEY, &IV, &mut r);
        let mut other_key = KEY;
        other_key[7] ^= 0x01;
        let err = answer_challenge(&other_key, &IV, &challenge_ct, &mut r).unwrap_err();
        assert!(matches!(err, HandshakeError::WrongQuantumKey));
    }

    #[test]
    fn ack_from_wrong_key_fails_auth() {
        let mut r = rng(3);
        let (issued, challenge_ct) = build_challenge(&KEY, &IV, &mut r);
        let mut other_key = KEY;
        other_key[0] ^= 0x80;
        // An attacker who cannot read the challenge and just invents an ack.
        let nonce = derive_nonce(&IV, Direction::MasterToSlave, 0);
        let forged = seal_challenge_body(&other_key, &nonce, &[0xAA; 32], &[0xBB; 32]);
        let _ = challenge_ct;
        let err = verify_challenge_ack(&issued, &KEY, &IV, &forged).unwrap_err();
        assert!(matches!(err, HandshakeError::BadAuth));
    }

    #[test]
    fn reflected_challenge_fails_auth() {
        // Replaying the slave's own challenge bytes as the ack must fail:
        // it was sealed with the slave->master nonce, the ack is opened with
        // the master->slave nonce.
        let mut r = rng(4);
        let (issued, challenge_ct) = build_challenge(&KEY, &IV, &mut r);
        let err = verify_challenge_ack(&issued, &KEY, &IV, &challenge_ct).unwrap_err();
        assert!(matches!(err, HandshakeError::BadAuth));
    }

    #[test]
    fn wrong_token_is_rejected() {
        let mut r = rng(5);
        let (issued, _) = build_challenge(&KEY, &IV, &mut r);
        let nonce = derive_nonce(&IV, Direction::MasterToSlave, 0);
        let mut wrong_token = issued.token;
        wrong_token[31] ^= 1;
        let ack = seal_challenge_body(&KEY, &nonce, &wrong_token, &[0xCC; 32]);
        let err = verify_challenge_ack(&issued, &KEY, &IV, &ack).unwrap_err();
        assert!(matches!(err, HandshakeError::TokenMismatch));
    }

    #[test]
    fn replayed_seed_is_rejected() {
        let mut r = rng(6);
        let (issued, _) = build_challenge(&KEY, &IV, &mut r);
        let nonce = derive_nonce(&IV, Direction::MasterToSlave, 0);
        let ack = seal_challenge_body(&KEY, &nonce, &issued.token, &issued.seed);
        let err = verify_challenge_ack(&issued, &KEY, &IV, &ack).unwrap_err();
        assert!(matches!(err, HandshakeError::SeedReplayed));
    }

    #[test]
    fn token_check_precedes_seed_check() {
        // Wrong token AND replayed seed: the token mismatch is reported.
        let mut r = rng(7);
        let (issued, _) = build_challenge(&KEY, &IV, &mut r);
        let nonce = derive_nonce(&IV, Direction::MasterToSlave, 0);
        let ack = seal_challenge_body(&KEY, &nonce, &[0u8; 32], &issued.seed);
        let err = verify_challenge_ack(&issued, &KEY, &IV, &ack).unwrap_err();
        assert!(matches!(err, HandshakeError::TokenMismatch));
    }

    #[test]
    fn tampered_ack_fails_auth() {
        let mut r = rng(8);
        let (issued, challenge_ct) = build_challenge(&KEY, &IV, &mut r);
        let mut answer = answer_challenge(&KEY, &IV, &challenge_ct, &mut r).unwrap();
        answer.ciphertext[40] ^= 0x10;
        let err = verify_challenge_ack(&issued, &KEY, &IV, &answer.ciphertext).unwrap_err();
        assert!(matches!(err, HandshakeError::BadAuth));
    }
}
