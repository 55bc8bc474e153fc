//! Storage and lifecycle management for post-processed QKD key material.
//!
//! A key management entity (KME) sits on a node of a QKD network and holds the
//! symmetric key material produced by the quantum link with each peer KME.
//! This crate turns raw post-processed material files into fixed-size keys with
//! stable, content-derived identifiers, and tracks each key through its
//! delivery lifecycle:
//!
//! ```text
//! AVAILABLE ──reserve──▶ RESERVED ──take──▶ CONSUMED
//!     ▲                      │
//!     └──── cancel ──────────┘   (compensation when peer activation fails)
//! ```
//!
//! Both KMEs of a link ingest identical material files and therefore derive an
//! identical pool of keys with identical identifiers, without ever exchanging
//! key bytes: the identifier is a fingerprint of the key content itself.

#![forbid(unsafe_code)]

mod entropy;
mod error;
mod ingest;
mod journal;
mod key;
mod store;

pub use entropy::{byte_entropy, EntropyReport};
pub use error::KeyStoreError;
pub use ingest::{IngestReport, PeerIngest, MATERIAL_FILE_EXTENSION};
pub use key::{
    derive_key_uuid, KeyActivation, KeyMaterial, KeyState, KeyUuid, KmeId, SaeId, KEY_SIZE_BITS,
    KEY_SIZE_BYTES, MAX_KEYS_PER_REQUEST,
};
pub use store::{ActivationOutcome, KeyPoolStatus, KeyStore, ReservedKey};
