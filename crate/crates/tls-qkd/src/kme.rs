//! The handshake machines' view of a KME.
//!
//! The machines are sans-io: when they need a key operation they emit a
//! [`KmeRequest`] action and suspend until the driver feeds back a
//! [`KmeReply`]. Real drivers satisfy requests over the KME's REST interface;
//! simulations satisfy them from an in-process store.

use qkd_keystore::{KeyMaterial, KeyUuid, SaeId};

/// A key operation the handshake needs performed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KmeRequest {
    /// Ask the KME which SAE this endpoint's certificate maps to.
    OwnSaeId,
    /// Master side: reserve a fresh key for a session with `slave_sae_id`.
    NewKey {
        /// The server-side SAE the key is for.
        slave_sae_id: SaeId,
    },
    /// Slave side: retrieve the key `key_uuid` that `master_sae_id` reserved.
    KeyById {
        /// The client-side SAE that reserved the key.
        master_sae_id: SaeId,
        /// Identifier from the ClientHello.
        key_uuid: KeyUuid,
    },
}

/// The driver's answer to a [`KmeRequest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KmeReply {
    /// Answer to [`KmeRequest::OwnSaeId`].
    OwnSaeId(SaeId),
    /// Answer to [`KmeRequest::NewKey`].
    NewKey {
        /// Identifier of the reserved key.
        key_uuid: KeyUuid,
        /// The key material.
        material: KeyMaterial,
    },
    /// Answer to [`KmeRequest::KeyById`].
    KeyMaterial(KeyMaterial),
    /// The operation failed.
    Failed(KmeFailure),
}

/// Why a KME operation failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KmeFailure {
    /// The KME could not be reached at all.
    #[error("KME unreachable: {0}")]
    Unreachable(String),
    /// The KME does not recognize this endpoint's certificate.
    #[error("this endpoint is not registered with the KME")]
    NotRegistered,
    /// No key material is left for the requested peer.
    #[error("key pool exhausted")]
    PoolExhausted,
    /// The referenced key is unknown to the KME.
    #[error("key not found")]
    KeyNotFound,
    /// The KME refused the operation for this identity.
    #[error("not authorized for the requested key")]
    Unauthorized,
    /// The referenced key was already delivered once.
    #[error("key already consumed")]
    AlreadyConsumed,
    /// The KME answered, but not in a form this client understands.
    #[error("KME protocol error: {0}")]
    Protocol(String),
}

/// Blocking KME access used by the socket drivers.
pub trait KmeAccess {
    /// Performs one operation against the KME.
    fn perform(&mut self, request: &KmeRequest) -> KmeReply;
}
