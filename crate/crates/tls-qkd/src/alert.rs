//! Handshake alert codes.
//!
//! An endpoint that aborts a handshake sends a one-byte alert record
//! (content type 0x15) naming the reason, then closes. Alerts are never
//! encrypted: every failure they describe occurs before a protected channel
//! exists, and their codes carry no secrets.

use std::fmt;

/// Reason codes carried in alert records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AlertCode {
    /// The KME could not deliver the referenced key.
    KeyUnavailable = 1,
    /// The peer's challenge could not be read: the two sides hold different
    /// quantum keys.
    WrongQuantumKey = 2,
    /// An AEAD-protected handshake message failed authentication.
    BadAuth = 3,
    /// The challenge answer returned a different token than was issued.
    TokenMismatch = 4,
    /// The challenge answer replayed the challenge seed instead of a fresh one.
    SeedReplayed = 5,
    /// The peer offered (or demanded) classical mode but this endpoint is
    /// configured QKD-only.
    DowngradeRefused = 6,
    /// A message could not be parsed.
    MalformedMessage = 7,
    /// A well-formed message arrived that the current handshake phase does
    /// not allow.
    ProtocolError = 8,
    /// Local failure unrelated to the peer's behavior.
    InternalError = 9,
}

impl AlertCode {
    /// Decodes a wire byte.
    pub fn from_u8(byte: u8) -> Option<AlertCode> {
        Some(match byte {
            1 => AlertCode::KeyUnavailable,
            2 => AlertCode::WrongQuantumKey,
            3 => AlertCode::BadAuth,
            4 => AlertCode::TokenMismatch,
            5 => AlertCode::SeedReplayed,
            6 => AlertCode::DowngradeRefused,
            7 => AlertCode::MalformedMessage,
            8 => AlertCode::ProtocolError,
            9 => AlertCode::InternalError,
            _ => return None,
        })
    }

    /// The wire byte.
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for AlertCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AlertCode::KeyUnavailable => "KeyUnavailable",
            AlertCode::WrongQuantumKey => "WrongQuantumKey",
            AlertCode::BadAuth => "BadAuth",
            AlertCode::TokenMismatch => "TokenMismatch",
            AlertCode::SeedReplayed => "SeedReplayed",
            AlertCode::DowngradeRefused => "DowngradeRefused",
            AlertCode::MalformedMessage => "MalformedMessage",
            AlertCode::ProtocolError => "ProtocolError",
            AlertCode::InternalError => "InternalError",
        };
        write!(f, "{name}({})", self.as_u8())
    }
}
