//! Classical fallback key establishment.
//!
//! When either endpoint lacks QKD capability, the handshake degrades to an
//! ephemeral x25519 exchange with the same three-flight shape: ClientHello
//! and ServerHello carry the shares, and the client's Finished proves the
//! derived keys and binds the hello transcript. The session then uses the
//! same AES-256-GCM record layer as the QKD path, at the classical protocol
//! version.

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::consts::{BASE_IV_LEN, HELLO_RANDOM_LEN, KEY_SHARE_LEN};
use crate::rng::{random_array, HandshakeRng};

type HmacSha256 = Hmac<Sha256>;

/// Session secrets derived from the DH exchange.
pub struct ClassicalKeys {
    /// AES-256-GCM session key.
    pub key: [u8; 32],
    /// Base IV for nonce derivation.
    pub base_iv: [u8; BASE_IV_LEN],
    /// MAC key for the Finished message.
    pub finished_key: [u8; 32],
}

/// An ephemeral x25519 key pair.
pub struct EphemeralShare {
    secret: StaticSecret,
    /// Public share carried in the hello.
    pub public: [u8; KEY_SHARE_LEN],
}

impl EphemeralShare {
    /// Generates a key pair from handshake randomness.
    pub fn generate(rng: &mut dyn HandshakeRng) -> EphemeralShare {
        let secret = StaticSecret::from(random_array::<32>(rng));
        let public = PublicKey::from(&secret).to_bytes();
        EphemeralShare { secret, public }
    }

    /// Completes the exchange against the peer's share.
    ///
    /// Returns `None` for a non-contributory peer share (e.g. an all-zero
    /// point), which a well-behaved peer never sends.
    pub fn agree(&self, peer_public: &[u8; KEY_SHARE_LEN]) -> Option<[u8; 32]> {
        let shared = self.secret.diffie_hellman(&PublicKey::from(*peer_public));
        if !shared.was_contributory() {
            return None;
        }
        Some(*shared.as_bytes())
    }
}

fn prf(key: &[u8], label: &str) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(label.as_bytes());
    mac.finalize().into_bytes().into()
}

/// Derives session secrets from the DH shared secret and both hello randoms.
pub fn derive_classical_keys(
    shared: &[u8; 32],
    client_random: &[u8; HELLO_RANDOM_LEN],
    server_random: &[u8; HELLO_RANDOM_LEN],
) -> ClassicalKeys {
    let mut salt = HmacSha256::new_from_slice(&[]).expect("empty salt");
    salt.update(client_random);
    salt.update(server_random);
    salt.update(shared);
    let prk: [u8; 32] = salt.finalize().into_bytes().into();

    let key = prf(&prk, "classical key");
    let iv_block = prf(&prk, "classical iv");
    let finished_key = prf(&prk, "classical finished");
    let mut base_iv = [0u8; BASE_IV_LEN];
    base_iv.copy_from_slice(&iv_block[..BASE_IV_LEN]);
    ClassicalKeys {
        key,
        base_iv,
        finished_key,
    }
}

/// Computes the Finished MAC over the handshake transcript (the full
/// ClientHello and ServerHello records, in order).
pub fn finished_mac(finished_key: &[u8; 32], transcript: &[u8]) -> [u8; 32] {
    let digest = Sha256::digest(transcript);
    let mut mac = HmacSha256::new_from_slice(finished_key).expect("32-byte key");
    mac.update(&digest);
    mac.finalize().into_bytes().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn both_sides_derive_identical_keys() {
        let mut rng_a = ChaCha20Rng::seed_from_u64(1);
        let mut rng_b = ChaCha20Rng::seed_from_u64(2);
        let a = EphemeralShare::generate(&mut rng_a);
        let b = EphemeralShare::generate(&mut rng_b);
        let shared_a = a.agree(&b.public).unwrap();
        let shared_b = b.agree(&a.public).unwrap();
        assert_eq!(shared_a, shared_b);

        let cr = [1u8; 32];
        let sr = [2u8; 32];
        let ka = derive_classical_keys(&shared_a, &cr, &sr);
        let kb = derive_classical_keys(&shared_b, &cr, &sr);
        assert_eq!(ka.key, kb.key);
        assert_eq!(ka.base_iv, kb.base_iv);
        assert_eq!(ka.finished_key, kb.finished_key);
        // And the randoms matter: different transcript randoms, different keys.
        let kc = derive_classical_keys(&shared_a, &sr, &cr);
        assert_ne!(ka.key, kc.key);
    }

    #[test]
    fn zero_share_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = EphemeralShare::generate(&mut rng);
        assert!(a.agree(&[0u8; 32]).is_none());
    }

    #[test]
    fn finished_mac_binds_transcript_and_key() {
        let key = [7u8; 32];
        let mac1 = finished_mac(&key, b"transcript one");
        let mac2 = finished_mac(&key, b"transcript two");
        assert_ne!(mac1, mac2);
        let other_key = [8u8; 32];
        assert_ne!(mac1, finished_mac(&other_key, b"transcript one"));
    }
}
