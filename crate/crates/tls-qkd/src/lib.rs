//! TLS-QKD protocol core.
//!
//! This crate implements a TLS-like secure channel whose session key is not
//! negotiated over the wire but delivered out-of-band by a pair of key
//! management entities (KMEs) fed from quantum key distribution links. The
//! handshake between the TLS client (the QKD "master" SAE) and the TLS server
//! (the "slave" SAE) only transports a *reference* to the key — its
//! content-derived identifier — plus a challenge/response that proves both
//! sides retrieved the same 256-bit key from their respective KMEs:
//!
//! ```text
//! master                                 slave
//!   │  ClientHello (sae id ‖ key uuid ‖ iv) │
//!   ├───────────────────────────────────────▶
//!   │  ServerHello (AEAD challenge)         │
//!   ◀───────────────────────────────────────┤
//!   │  ChallengeAck (token, fresh seed)     │
//!   ├───────────────────────────────────────▶
//!   │  application data (AES-256-GCM)       │
//! ```
//!
//! Both hellos also carry an ephemeral ECDH share, so either endpoint can
//! interoperate with a peer that has no QKD capability by falling back to a
//! classical handshake of the same three-flight shape — unless configured to
//! refuse the downgrade.
//!
//! The handshake state machines are sans-io: they consume records and KME
//! replies, and emit actions (records to send, KME operations to perform).
//! The same machines are driven by the blocking socket driver in
//! [`driver`] and by deterministic network simulations.

#![forbid(unsafe_code)]

pub mod alert;
pub mod challenge;
pub mod classical;
pub mod consts;
pub mod driver;
pub mod handshake;
pub mod kme;
pub mod nonce;
pub mod record;
pub mod rng;
#[cfg(any(test, feature = "testing"))]
pub mod testutil;
pub mod wire;

pub use alert::AlertCode;
pub use driver::{run_master_handshake, run_slave_handshake, Connection, ConnectionError};
pub use handshake::{
    Established, EstablishedMode, HandshakeError, HsAction, MasterConfig, MasterHandshake,
    ModePolicy, Phase, SlaveConfig, SlaveHandshake,
};
pub use kme::{KmeAccess, KmeFailure, KmeReply, KmeRequest};
pub use rng::HandshakeRng;
