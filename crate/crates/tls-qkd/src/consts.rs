//! Protocol constants: versions, record content types, extension numbers,
//! and fixed field sizes.

/// Protocol version carried by every record on the QKD path.
pub const PROTOCOL_VERSION_QKD: u16 = 0x0E00;

/// Protocol version used by the classical fallback handshake, mirroring the
/// TLS 1.2 record-layer version that classical stacks put on the wire.
pub const PROTOCOL_VERSION_CLASSICAL: u16 = 0x0303;

/// ClientHello extension announcing QKD capability and referencing the
/// delivered key: 8-byte big-endian SAE id ‖ 16-byte key uuid ‖ 12-byte IV.
pub const EXT_QKD_HELLO: u16 = 0xFEA6;

/// ServerHello extension carrying the AEAD key-confirmation challenge.
pub const EXT_QKD_CHALLENGE: u16 = 0xFEA7;

/// Ephemeral ECDH share (x25519), present for classical interoperability.
pub const EXT_KEY_SHARE: u16 = 0x0033;

/// Record content type: alert.
pub const REC_ALERT: u8 = 0x15;

/// Record content type: handshake.
pub const REC_HANDSHAKE: u8 = 0x16;

/// Record content type: protected application data.
pub const REC_APPLICATION_DATA: u8 = 0x17;

/// Record content type: the master's answer to the slave's challenge.
pub const REC_CHALLENGE_ACK: u8 = 0x50;

/// Handshake message type: ClientHello.
pub const HS_CLIENT_HELLO: u8 = 0x01;

/// Handshake message type: ServerHello.
pub const HS_SERVER_HELLO: u8 = 0x02;

/// Handshake message type: Finished (classical fallback only).
pub const HS_FINISHED: u8 = 0x14;

/// Exact body length of the QKD hello extension.
pub const QKD_HELLO_EXT_LEN: usize = 8 + 16 + 12;

/// Length of the challenge/ack plaintext: 32-byte token ‖ 32-byte seed.
pub const CHALLENGE_PLAINTEXT_LEN: usize = 64;

/// Exact body length of the challenge extension and of the ack record:
/// 64-byte plaintext plus the 16-byte AEAD tag.
pub const CHALLENGE_CIPHERTEXT_LEN: usize = CHALLENGE_PLAINTEXT_LEN + AEAD_TAG_LEN;

/// AES-256-GCM authentication tag length.
pub const AEAD_TAG_LEN: usize = 16;

/// Length of the fixed record header: type (1) ‖ version (2) ‖ length (2).
pub const RECORD_HEADER_LEN: usize = 5;

/// Maximum plaintext carried by one application-data record.
pub const MAX_RECORD_PLAINTEXT: usize = 16 * 1024;

/// Upper bound on a record body accepted off the wire.
pub const MAX_RECORD_BODY: usize = MAX_RECORD_PLAINTEXT + 512;

/// Length of an x25519 public share.
pub const KEY_SHARE_LEN: usize = 32;

/// Length of the random field in both hellos.
pub const HELLO_RANDOM_LEN: usize = 32;

/// Length of the base IV from which per-record nonces are derived.
pub const BASE_IV_LEN: usize = 12;
