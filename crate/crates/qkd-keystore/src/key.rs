//! Core key types and identifier derivation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

/// Size of one delivered key in bytes.
pub const KEY_SIZE_BYTES: usize = 32;

/// Size of one delivered key in bits, as reported on the status route.
pub const KEY_SIZE_BITS: usize = KEY_SIZE_BYTES * 8;

/// Keys are delivered strictly one at a time; batching is not supported.
pub const MAX_KEYS_PER_REQUEST: usize = 1;

/// Identifier of a secure application entity (SAE), carried in certificates
/// and on the wire as a 64-bit integer.
pub type SaeId = i64;

/// Identifier of a key management entity (KME).
pub type KmeId = i64;

/// Raw key material of a single key.
pub type KeyMaterial = [u8; KEY_SIZE_BYTES];

/// Delivery lifecycle state of a stored key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyState {
    /// Ingested and not yet assigned to any SAE pair.
    Available,
    /// Assigned to a master/slave SAE pair; awaiting retrieval by the slave.
    Reserved,
    /// Delivered to the slave SAE. Terminal: a key is never handed out twice.
    Consumed,
}

impl fmt::Display for KeyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KeyState::Available => "AVAILABLE",
            KeyState::Reserved => "RESERVED",
            KeyState::Consumed => "CONSUMED",
        };
        f.write_str(s)
    }
}

impl FromStr for KeyState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AVAILABLE" => Ok(KeyState::Available),
            "RESERVED" => Ok(KeyState::Reserved),
            "CONSUMED" => Ok(KeyState::Consumed),
            other => Err(format!("unknown key state `{other}`")),
        }
    }
}

/// The SAE pair a reserved key is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyActivation {
    /// SAE that requested the key (TLS client side).
    pub master_sae: SaeId,
    /// SAE entitled to retrieve the key by identifier (TLS server side).
    pub slave_sae: SaeId,
}

/// Content-derived identifier of a key.
///
/// Both KMEs of a link compute the same identifier from the same 32 bytes of
/// material, so a key can be referenced across the network without ever
/// transmitting the material itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyUuid(uuid::Uuid);

impl KeyUuid {
    /// Wraps raw identifier bytes (e.g. parsed off the wire).
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        KeyUuid(uuid::Uuid::from_bytes(bytes))
    }

    /// The identifier as raw bytes, for wire encoding.
    pub fn as_bytes(&self) -> &[u8; 16] {
        self.0.as_bytes()
    }
}

impl fmt::Display for KeyUuid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `uuid` renders lowercase hyphenated by default; that rendering is
        // part of the REST interface contract.
        write!(f, "{}", self.0)
    }
}

impl FromStr for KeyUuid {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(KeyUuid(uuid::Uuid::parse_str(s)?))
    }
}

/// Derives the identifier of a key from its material.
///
/// The first 16 bytes of the SHA-1 digest of the material are stamped as an
/// RFC 4122 version-5 UUID (version nibble 5, variant bits `10`). SHA-1 is
/// used as a fingerprint for naming only — collision resistance is not a
/// security requirement here, and the store treats any cross-material
/// identifier collision as a fatal consistency error rather than relying on
/// it being impossible.
pub fn derive_key_uuid(material: &KeyMaterial) -> KeyUuid {
    let digest = Sha1::digest(material);
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    bytes[6] = (bytes[6] & 0x0f) | 0x50; // version 5
    bytes[8] = (bytes[8] & 0x3f) | 0x80; // RFC 4122 variant
    KeyUuid::from_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uuid_of_all_zero_material_is_stable() {
        let material = [0u8; KEY_SIZE_BYTES];
        assert_eq!(
            derive_key_uuid(&material).to_string(),
            "de8a847b-ff8c-543d-a9b8-53a215e6ee77"
        );
    }

    #[test]
    fn uuid_of_counting_material_is_stable() {
        let mut material = [0u8; KEY_SIZE_BYTES];
        for (i, byte) in material.iter_mut().enumerate() {
            *byte = i as u8;
        }
        assert_eq!(
            derive_key_uuid(&material).to_string(),
            "ae5bd8ef-ea53-52c4-9998-6d06680a7813"
        );
    }

    #[test]
    fn uuid_has_version_5_and_rfc4122_variant() {
        let material = [0xabu8; KEY_SIZE_BYTES];
        let id = derive_key_uuid(&material);
        let bytes = id.as_bytes();
        assert_eq!(bytes[6] >> 4, 5, "version nibble");
        assert_eq!(bytes[8] >> 6, 0b10, "variant bits");
        let text = id.to_string();
        assert_eq!(text.as_bytes()[14], b'5', "version digit in text form");
    }

    #[test]
    fn uuid_roundtrips_through_text() {
        let material = [0x5au8; KEY_SIZE_BYTES];
        let id = derive_key_uuid(&material);
        let parsed: KeyUuid = id.to_string().parse().unwrap();
        assert_eq!(parsed, id);
    }

    #[test]
    fn distinct_material_gives_distinct_uuids() {
        let a = derive_key_uuid(&[1u8; KEY_SIZE_BYTES]);
        let b = derive_key_uuid(&[2u8; KEY_SIZE_BYTES]);
        assert_ne!(a, b);
    }
}
