//! Wire-level request and response bodies for the key delivery API.
//!
//! Field names follow the interoperable key-delivery JSON vocabulary
//! (`key_ID`, `SAE_ID`, ...), so serde rename attributes are load-bearing:
//! changing them breaks every deployed client.

use qkd_keystore::{KmeId, SaeId};
use serde::{Deserialize, Serialize};

/// A batch of delivered keys. Every key-delivery response uses this shape,
/// even though the service currently caps batches at one key.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct KeyContainer {
    pub keys: Vec<KeyEntry>,
}

/// One delivered key: its UUID (canonical hyphenated text) and the 256-bit
/// secret, base64-encoded with padding.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct KeyEntry {
    #[serde(rename = "key_ID")]
    pub key_id: String,
    pub key: String,
}

/// Response body for `GET /api/v1/sae/info/me`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct SaeInfoMe {
    #[serde(rename = "SAE_ID")]
    pub sae_id: SaeId,
}

/// Response body for `GET /api/v1/keys/{slave_SAE_ID}/status`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct StatusResponse {
    #[serde(rename = "source_KME_ID")]
    pub source_kme_id: KmeId,
    #[serde(rename = "target_KME_ID")]
    pub target_kme_id: KmeId,
    /// Key length in bits; always 256 for this service.
    pub key_size: u32,
    /// Keys currently available for new reservations against the target KME.
    pub stored_key_count: usize,
    pub max_keys_per_request: usize,
}

/// Inter-KME activation message, sent by the master's KME to the slave's KME
/// over the KME-facing listener when a key is reserved.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ActivationMsg {
    #[serde(rename = "key_ID")]
    pub key_id: String,
    #[serde(rename = "master_SAE_ID")]
    pub master_sae_id: SaeId,
    #[serde(rename = "slave_SAE_ID")]
    pub slave_sae_id: SaeId,
}

/// Response body for `GET /api/v1/admin/entropy/{peer_kme_id}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EntropyResponse {
    pub peer_kme_id: KmeId,
    /// Bytes of raw key material sampled for the estimate.
    pub total_bytes: u64,
    /// Shannon estimate over byte frequencies; 8.0 is ideal.
    pub entropy_bits_per_byte: f64,
    /// Keys still available for delivery from this peer's pool.
    pub stored_key_count: usize,
    /// All keys ever ingested from this peer, in any lifecycle state.
    pub total_key_count: usize,
}

/// Uniform error body: every non-2xx response carries a machine-readable
/// reason string.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub reason: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_container_uses_interop_field_names() {
        let container = KeyContainer {
            keys: vec![KeyEntry {
                key_id: "5a0b...".into(),
                key: "QUJD".into(),
            }],
        };
        let json = serde_json::to_value(&container).unwrap();
        assert!(json["keys"][0]["key_ID"].is_string());
        assert!(json["keys"][0]["key"].is_string());
    }

    #[test]
    fn activation_uses_interop_field_names() {
        let msg = ActivationMsg {
            key_id: "x".into(),
            master_sae_id: 101,
            slave_sae_id: 202,
        };
        let json = serde_json::to_value(&msg).unwrap();
        assert_eq!(json["key_ID"], "x");
        assert_eq!(json["master_SAE_ID"], 101);
        assert_eq!(json["slave_SAE_ID"], 202);
    }

    #[test]
    fn sae_info_uses_upper_case_id() {
        let json = serde_json::to_value(SaeInfoMe { sae_id: 7 }).unwrap();
        assert_eq!(json["SAE_ID"], 7);
    }
}
