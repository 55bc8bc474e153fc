//! Sans-io handshake state machines for both roles.
//!
//! A machine consumes exactly two kinds of input — complete records from the
//! peer ([`MasterHandshake::on_record`] / [`SlaveHandshake::on_record`]) and
//! KME replies ([`MasterHandshake::on_kme_reply`] /
//! [`SlaveHandshake::on_kme_reply`]) — and every input returns the list of
//! [`HsAction`]s the driver must carry out, in order. The machines perform no
//! I/O and read no clocks, which lets the same code run over real sockets and
//! inside deterministic network simulations.
//!
//! On any protocol failure the machine drops its key state, enters
//! [`Phase::Failed`] permanently, and returns an error whose
//! [`HandshakeError::alert_to_send`] tells the driver which alert record to
//! emit before closing.

mod master;
mod slave;

pub use master::MasterHandshake;
pub use slave::SlaveHandshake;

use qkd_keystore::SaeId;

use crate::alert::AlertCode;
use crate::kme::KmeFailure;
use crate::record::RecordProtection;
use crate::wire::WireError;

/// How an endpoint negotiates the session mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePolicy {
    /// Use QKD when the peer supports it, fall back to classical otherwise.
    QkdPreferred,
    /// Refuse to establish anything but a TLS-QKD session.
    QkdOnly,
    /// A classical endpoint: no KME, no QKD extensions.
    ClassicalOnly,
}

/// Configuration of the master (TLS client) machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MasterConfig {
    /// Mode negotiation policy.
    pub policy: ModePolicy,
    /// SAE id of the server-side peer, required unless classical-only: the
    /// KME binds the reserved key to this identity.
    pub slave_sae_id: Option<SaeId>,
}

impl MasterConfig {
    /// QKD with classical fallback, targeting `slave_sae_id`.
    pub fn qkd(slave_sae_id: SaeId) -> MasterConfig {
        MasterConfig {
            policy: ModePolicy::QkdPreferred,
            slave_sae_id: Some(slave_sae_id),
        }
    }

    /// QKD with downgrade refusal, targeting `slave_sae_id`.
    pub fn qkd_only(slave_sae_id: SaeId) -> MasterConfig {
        MasterConfig {
            policy: ModePolicy::QkdOnly,
            slave_sae_id: Some(slave_sae_id),
        }
    }

    /// A purely classical client.
    pub fn classical_only() -> MasterConfig {
        MasterConfig {
            policy: ModePolicy::ClassicalOnly,
            slave_sae_id: None,
        }
    }
}

/// Configuration of the slave (TLS server) machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlaveConfig {
    /// Mode negotiation policy.
    pub policy: ModePolicy,
}

/// Coarse handshake phase, mainly for logging and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Nothing sent yet (possibly waiting on the KME).
    Start,
    /// Own hello sent; awaiting the peer's next flight.
    HelloSent,
    /// Challenge issued in the ServerHello; awaiting the ack (slave only).
    ChallengeSent,
    /// Established in TLS-QKD mode.
    Established,
    /// Established in classical fallback mode.
    FallbackClassical,
    /// Aborted. Terminal: all further input is rejected.
    Failed,
}

/// Mode a completed handshake ended up in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstablishedMode {
    /// Keyed by the QKD-delivered key; records at the QKD version.
    TlsQkd,
    /// Keyed by the classical DH exchange; records at the classical version.
    Classical,
}

/// The product of a successful handshake.
pub struct Established {
    /// Negotiated mode.
    pub mode: EstablishedMode,
    /// Ready-to-use record protection (sequence counters at 1).
    pub protection: RecordProtection,
}

/// One step the driver must perform, in list order.
pub enum HsAction {
    /// Write this complete record to the transport.
    SendRecord(Vec<u8>),
    /// Perform this KME operation and feed the reply back in.
    KmeRequest(crate::kme::KmeRequest),
    /// The handshake is complete; no further machine input is expected.
    /// Boxed: the payload carries the session's cipher state, which dwarfs
    /// the other variants.
    Established(Box<Established>),
}

impl std::fmt::Debug for HsAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HsAction::SendRecord(bytes) => f
                .debug_struct("SendRecord")
                .field("len", &bytes.len())
                .finish(),
            HsAction::KmeRequest(req) => f.debug_tuple("KmeRequest").field(req).finish(),
            HsAction::Established(e) => f.debug_tuple("Established").field(&e.mode).finish(),
        }
    }
}

/// Handshake failures. The machine that returns one of these has already
/// entered [`Phase::Failed`]; [`HandshakeError::alert_to_send`] names the
/// alert the driver should emit, if any.
#[derive(Debug, thiserror::Error)]
pub enum HandshakeError {
    /// A KME operation failed; without a delivered key there is no session.
    #[error("key delivery failed: {0}")]
    Kme(#[from] KmeFailure),
    /// The peer's challenge did not authenticate: the two KMEs delivered
    /// different keys.
    #[error("peer holds a different quantum key")]
    WrongQuantumKey,
    /// An AEAD-protected handshake message failed authentication.
    #[error("handshake message failed authentication")]
    BadAuth,
    /// The challenge answer returned the wrong token.
    #[error("challenge answer returned a different token")]
    TokenMismatch,
    /// The challenge answer replayed the challenge's own seed.
    #[error("challenge answer replayed the challenge seed")]
    SeedReplayed,
    /// The peer lacks (or refuses) QKD and this endpoint refuses classical.
    #[error("peer requires a mode this endpoint refuses")]
    DowngradeRefused,
    /// The peer's bytes could not be decoded.
    #[error(transparent)]
    Wire(#[from] WireError),
    /// A well-formed message arrived that the current phase does not allow.
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// The peer aborted with an alert.
    #[error("peer aborted the handshake: {0}")]
    PeerAlert(AlertCode),
    /// A local failure unrelated to the peer.
    #[error("internal error: {0}")]
    Internal(String),
}

impl HandshakeError {
    /// Alert record the driver should send before closing, if any.
    pub fn alert_to_send(&self) -> Option<AlertCode> {
        match self {
            HandshakeError::Kme(_) => Some(AlertCode::KeyUnavailable),
            HandshakeError::WrongQuantumKey => Some(AlertCode::WrongQuantumKey),
            HandshakeError::BadAuth => Some(AlertCode::BadAuth),
            HandshakeError::TokenMismatch => Some(AlertCode::TokenMismatch),
            HandshakeError::SeedReplayed => Some(AlertCode::SeedReplayed),
            HandshakeError::DowngradeRefused => Some(AlertCode::DowngradeRefused),
            HandshakeError::Wire(WireError::Malformed(_)) => Some(AlertCode::MalformedMessage),
            HandshakeError::Wire(WireError::Unexpected(_)) => Some(AlertCode::ProtocolError),
            HandshakeError::Protocol(_) => Some(AlertCode::ProtocolError),
            HandshakeError::PeerAlert(_) => None,
            HandshakeError::Internal(_) => Some(AlertCode::InternalError),
        }
    }
}
