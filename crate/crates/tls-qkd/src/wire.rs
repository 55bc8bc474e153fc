//! Record framing and handshake message codecs.
//!
//! Every message travels in a record:
//!
//! ```text
//! content_type (1) ‖ version (2, BE) ‖ length (2, BE) ‖ body
//! ```
//!
//! Handshake bodies carry one handshake message:
//!
//! ```text
//! msg_type (1) ‖ msg_length (3, BE) ‖ msg_body
//! ```
//!
//! and hello bodies are `random (32) ‖ extensions`, where the extension block
//! is a 2-byte total length followed by `type (2, BE) ‖ length (2, BE) ‖ body`
//! entries. Extensions known to this implementation are validated strictly
//! (exact lengths, no duplicates, no misplaced extensions); unknown extension
//! types are skipped, which is what lets a classical implementation ignore
//! the QKD extensions entirely.

use qkd_keystore::{KeyUuid, SaeId};

use crate::alert::AlertCode;
use crate::consts::*;

/// Decoding failures. [`WireError::Malformed`] carries a human-readable
/// reason used in logs; the peer only ever sees the alert code.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WireError {
    /// Structurally invalid bytes.
    #[error("malformed message: {0}")]
    Malformed(String),
    /// Structurally valid, but not legal here (wrong record or message type).
    #[error("unexpected message: {0}")]
    Unexpected(String),
}

impl WireError {
    fn malformed(reason: impl Into<String>) -> WireError {
        WireError::Malformed(reason.into())
    }
}

/// Parsed record header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    /// Content type byte (`REC_*`).
    pub content_type: u8,
    /// Protocol version.
    pub version: u16,
    /// Body length in bytes.
    pub length: u16,
}

impl RecordHeader {
    /// Encodes the 5-byte header.
    pub fn encode(&self) -> [u8; RECORD_HEADER_LEN] {
        let v = self.version.to_be_bytes();
        let l = self.length.to_be_bytes();
        [self.content_type, v[0], v[1], l[0], l[1]]
    }

    /// Parses a 5-byte header without validating the content type.
    pub fn parse(bytes: &[u8; RECORD_HEADER_LEN]) -> RecordHeader {
        RecordHeader {
            content_type: bytes[0],
            version: u16::from_be_bytes([bytes[1], bytes[2]]),
            length: u16::from_be_bytes([bytes[3], bytes[4]]),
        }
    }
}

/// Frames `body` into a record.
///
/// # Panics
///
/// Panics if `body` exceeds the 16-bit length field; callers fragment first.
pub fn encode_record(content_type: u8, version: u16, body: &[u8]) -> Vec<u8> {
    assert!(body.len() <= u16::MAX as usize, "record body too long");
    let header = RecordHeader {
        content_type,
        version,
        length: body.len() as u16,
    };
    let mut out = Vec::with_capacity(RECORD_HEADER_LEN + body.len());
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(body);
    out
}

/// Splits `bytes` into exactly one record, rejecting trailing data.
pub fn decode_single_record(bytes: &[u8]) -> Result<(RecordHeader, &[u8]), WireError> {
    if bytes.len() < RECORD_HEADER_LEN {
        return Err(WireError::malformed("record shorter than its header"));
    }
    let header = RecordHeader::parse(bytes[..RECORD_HEADER_LEN].try_into().expect("len checked"));
    let body = &bytes[RECORD_HEADER_LEN..];
    if body.len() != header.length as usize {
        return Err(WireError::malformed(format!(
            "record length field {} does not match body length {}",
            header.length,
            body.len()
        )));
    }
    if body.len() > MAX_RECORD_BODY {
        return Err(WireError::malformed("record body exceeds maximum"));
    }
    Ok((header, body))
}

fn check_hello_version(version: u16) -> Result<(), WireError> {
    if version != PROTOCOL_VERSION_QKD && version != PROTOCOL_VERSION_CLASSICAL {
        return Err(WireError::malformed(format!(
            "unknown protocol version {version:#06x}"
        )));
    }
    Ok(())
}

/// The QKD hello extension of a ClientHello.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QkdHello {
    /// The master SAE's own identifier — the slave quotes it back to its KME
    /// when retrieving the key.
    pub master_sae_id: SaeId,
    /// Identifier of the key the master reserved.
    pub key_uuid: KeyUuid,
    /// Base IV for all nonce derivation on this connection.
    pub base_iv: [u8; BASE_IV_LEN],
}

impl QkdHello {
    fn encode(&self) -> [u8; QKD_HELLO_EXT_LEN] {
        let mut out = [0u8; QKD_HELLO_EXT_LEN];
        out[..8].copy_from_slice(&self.master_sae_id.to_be_bytes());
        out[8..24].copy_from_slice(self.key_uuid.as_bytes());
        out[24..].copy_from_slice(&self.base_iv);
        out
    }

    fn decode(body: &[u8]) -> Result<QkdHello, WireError> {
        if body.len() != QKD_HELLO_EXT_LEN {
            return Err(WireError::malformed(format!(
                "qkd hello extension must be {QKD_HELLO_EXT_LEN} bytes, got {}",
                body.len()
            )));
        }
        Ok(QkdHello {
            master_sae_id: SaeId::from_be_bytes(body[..8].try_into().expect("len")),
            key_uuid: KeyUuid::from_bytes(body[8..24].try_into().expect("len")),
            base_iv: body[24..].try_into().expect("len"),
        })
    }
}

/// Parsed ClientHello.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    /// Record-layer version the hello arrived with.
    pub version: u16,
    /// Client random.
    pub random: [u8; HELLO_RANDOM_LEN],
    /// QKD extension; absent for classical clients.
    pub qkd: Option<QkdHello>,
    /// Ephemeral x25519 share for classical interoperability.
    pub key_share: Option<[u8; KEY_SHARE_LEN]>,
}

/// Parsed ServerHello.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    /// Record-layer version the hello arrived with.
    pub version: u16,
    /// Server random.
    pub random: [u8; HELLO_RANDOM_LEN],
    /// AEAD challenge ciphertext; present exactly on the QKD path.
    pub challenge: Option<[u8; CHALLENGE_CIPHERTEXT_LEN]>,
    /// Ephemeral x25519 share; present exactly on the classical path.
    pub key_share: Option<[u8; KEY_SHARE_LEN]>,
}

fn encode_extensions(extensions: &[(u16, Vec<u8>)]) -> Vec<u8> {
    let total: usize = extensions.iter().map(|(_, body)| 4 + body.len()).sum();
    assert!(total <= u16::MAX as usize, "extension block too long");
    let mut out = Vec::with_capacity(2 + total);
    out.extend_from_slice(&(total as u16).to_be_bytes());
    for (ext_type, body) in extensions {
        out.extend_from_slice(&ext_type.to_be_bytes());
        out.extend_from_slice(&(body.len() as u16).to_be_bytes());
        out.extend_from_slice(body);
    }
    out
}

fn encode_hello_record(
    msg_type: u8,
    version: u16,
    random: &[u8; HELLO_RANDOM_LEN],
    extensions: &[(u16, Vec<u8>)],
) -> Vec<u8> {
    let mut body = Vec::with_capacity(HELLO_RANDOM_LEN + 64);
    body.extend_from_slice(random);
    body.extend_from_slice(&encode_extensions(extensions));
    encode_record(REC_HANDSHAKE, version, &encode_handshake_msg(msg_type, &body))
}

fn encode_handshake_msg(msg_type: u8, body: &[u8]) -> Vec<u8> {
    assert!(body.len() < 1 << 24, "handshake message too long");
    let len = (body.len() as u32).to_be_bytes();
    let mut out = Vec::with_capacity(4 + body.len());
    out.push(msg_type);
    out.extend_from_slice(&len[1..]);
    out.extend_from_slice(body);
    out
}

/// Encodes a ClientHello record. Extensions are emitted in ascending type
/// order (key share, then QKD hello).
pub fn encode_client_hello(hello: &ClientHello) -> Vec<u8> {
    let mut extensions: Vec<(u16, Vec<u8>)> = Vec::new();
    if let Some(share) = &hello.key_share {
        extensions.push((EXT_KEY_SHARE, share.to_vec()));
    }
    if let Some(qkd) = &hello.qkd {
        extensions.push((EXT_QKD_HELLO, qkd.encode().to_vec()));
    }
    encode_hello_record(HS_CLIENT_HELLO, hello.version, &hello.random, &extensions)
}

/// Encodes a ServerHello record. Extensions are emitted in ascending type
/// order (key share, then challenge).
pub fn encode_server_hello(hello: &ServerHello) -> Vec<u8> {
    let mut extensions: Vec<(u16, Vec<u8>)> = Vec::new();
    if let Some(share) = &hello.key_share {
        extensions.push((EXT_KEY_SHARE, share.to_vec()));
    }
    if let Some(challenge) = &hello.challenge {
        extensions.push((EXT_QKD_CHALLENGE, challenge.to_vec()));
    }
    encode_hello_record(HS_SERVER_HELLO, hello.version, &hello.random, &extensions)
}

struct RawExtensions<'a> {
    entries: Vec<(u16, &'a [u8])>,
}

impl<'a> RawExtensions<'a> {
    fn parse(mut block: &'a [u8]) -> Result<RawExtensions<'a>, WireError> {
        if block.len() < 2 {
            return Err(WireError::malformed("missing extension block length"));
        }
        let total = u16::from_be_bytes([block[0], block[1]]) as usize;
        block = &block[2..];
        if block.len() != total {
            return Err(WireError::malformed(
                "extension block length does not match remaining bytes",
            ));
        }
        let mut entries = Vec::new();
        while !block.is_empty() {
            if block.len() < 4 {
                return Err(WireError::malformed("truncated extension header"));
            }
            let ext_type = u16::from_be_bytes([block[0], block[1]]);
            let len = u16::from_be_bytes([block[2], block[3]]) as usize;
            block = &block[4..];
            if block.len() < len {
                return Err(WireError::malformed("truncated extension body"));
            }
            if entries.iter().any(|(t, _)| *t == ext_type) {
                return Err(WireError::malformed(format!(
                    "duplicate extension {ext_type:#06x}"
                )));
            }
            entries.push((ext_type, &block[..len]));
            block = &block[len..];
        }
        Ok(RawExtensions { entries })
    }

    fn take(&self, ext_type: u16) -> Option<&'a [u8]> {
        self.entries
            .iter()
            .find(|(t, _)| *t == ext_type)
            .map(|(_, body)| *body)
    }
}

fn decode_key_share(body: &[u8]) -> Result<[u8; KEY_SHARE_LEN], WireError> {
    body.try_into()
        .map_err(|_| WireError::malformed("key share must be 32 bytes"))
}

fn split_hello<'a>(
    record: &'a [u8],
    expected_msg_type: u8,
) -> Result<(u16, [u8; HELLO_RANDOM_LEN], RawExtensions<'a>), WireError> {
    let (header, body) = decode_single_record(record)?;
    if header.content_type != REC_HANDSHAKE {
        return Err(WireError::Unexpected(format!(
            "expected a handshake record, got content type {:#04x}",
            header.content_type
        )));
    }
    check_hello_version(header.version)?;
    if body.len() < 4 {
        return Err(WireError::malformed("truncated handshake message"));
    }
    let msg_type = body[0];
    let msg_len = u32::from_be_bytes([0, body[1], body[2], body[3]]) as usize;
    let msg = &body[4..];
    if msg.len() != msg_len {
        return Err(WireError::malformed(
            "handshake length field does not match body",
        ));
    }
    if msg_type != expected_msg_type {
        return Err(WireError::Unexpected(format!(
            "expected handshake message {expected_msg_type:#04x}, got {msg_type:#04x}"
        )));
    }
    if msg.len() < HELLO_RANDOM_LEN {
        return Err(WireError::malformed("hello shorter than its random"));
    }
    let random: [u8; HELLO_RANDOM_LEN] = msg[..HELLO_RANDOM_LEN].try_into().expect("len");
    let extensions = RawExtensions::parse(&msg[HELLO_RANDOM_LEN..])?;
    Ok((header.version, random, extensions))
}

/// Decodes a ClientHello record.
///
/// The QKD extension is accepted only at the QKD protocol version, and the
/// QKD version is accepted only with the extension present — a half-QKD hello
/// is malformed either way. A challenge extension in a ClientHello is
/// rejected outright.
pub fn decode_client_hello(record: &[u8]) -> Result<ClientHello, WireError> {
    let (version, random, extensions) = split_hello(record, HS_CLIENT_HELLO)?;
    if extensions.take(EXT_QKD_CHALLENGE).is_some() {
        return Err(WireError::malformed(
            "challenge extension is not allowed in a client hello",
        ));
    }
    let qkd = extensions.take(EXT_QKD_HELLO).map(QkdHello::decode).transpose()?;
    let key_share = extensions.take(EXT_KEY_SHARE).map(decode_key_share).transpose()?;
    match (version, &qkd) {
        (PROTOCOL_VERSION_QKD, None) => {
            return Err(WireError::malformed(
                "qkd protocol version without the qkd hello extension",
            ));
        }
        (PROTOCOL_VERSION_CLASSICAL, Some(_)) => {
            return Err(WireError::malformed(
                "qkd hello extension requires the qkd protocol version",
            ));
        }
        _ => {}
    }
    Ok(ClientHello {
        version,
        random,
        qkd,
        key_share,
    })
}

/// Decodes a ServerHello record, with the same version/extension consistency
/// rules as [`decode_client_hello`].
pub fn decode_server_hello(record: &[u8]) -> Result<ServerHello, WireError> {
    let (version, random, extensions) = split_hello(record, HS_SERVER_HELLO)?;
    if extensions.take(EXT_QKD_HELLO).is_some() {
        return Err(WireError::malformed(
            "qkd hello extension is not allowed in a server hello",
        ));
    }
    let challenge = extensions
        .take(EXT_QKD_CHALLENGE)
        .map(|body| {
            body.try_into().map_err(|_| {
                WireError::malformed(format!(
                    "challenge extension must be {CHALLENGE_CIPHERTEXT_LEN} bytes"
                ))
            })
        })
        .transpose()?;
    let key_share = extensions.take(EXT_KEY_SHARE).map(decode_key_share).transpose()?;
    match (version, &challenge) {
        (PROTOCOL_VERSION_QKD, None) => {
            return Err(WireError::malformed(
                "qkd protocol version without a challenge extension",
            ));
        }
        (PROTOCOL_VERSION_CLASSICAL, Some(_)) => {
            return Err(WireError::malformed(
                "challenge extension requires the qkd protocol version",
            ));
        }
        _ => {}
    }
    Ok(ServerHello {
        version,
        random,
        challenge,
        key_share,
    })
}

/// Encodes the master's challenge-ack record (content type 0x50).
pub fn encode_challenge_ack(ciphertext: &[u8; CHALLENGE_CIPHERTEXT_LEN]) -> Vec<u8> {
    encode_record(REC_CHALLENGE_ACK, PROTOCOL_VERSION_QKD, ciphertext)
}

/// Decodes a challenge-ack record.
pub fn decode_challenge_ack(record: &[u8]) -> Result<[u8; CHALLENGE_CIPHERTEXT_LEN], WireError> {
    let (header, body) = decode_single_record(record)?;
    if header.content_type != REC_CHALLENGE_ACK {
        return Err(WireError::Unexpected(format!(
            "expected a challenge-ack record, got content type {:#04x}",
            header.content_type
        )));
    }
    if header.version != PROTOCOL_VERSION_QKD {
        return Err(WireError::malformed(
            "challenge ack must use the qkd protocol version",
        ));
    }
    body.try_into().map_err(|_| {
        WireError::malformed(format!(
            "challenge ack body must be {CHALLENGE_CIPHERTEXT_LEN} bytes"
        ))
    })
}

/// Encodes the classical Finished record.
pub fn encode_finished(verify_data: &[u8; 32]) -> Vec<u8> {
    encode_record(
        REC_HANDSHAKE,
        PROTOCOL_VERSION_CLASSICAL,
        &encode_handshake_msg(HS_FINISHED, verify_data),
    )
}

/// Decodes a classical Finished record.
pub fn decode_finished(record: &[u8]) -> Result<[u8; 32], WireError> {
    let (header, body) = decode_single_record(record)?;
    if header.content_type != REC_HANDSHAKE {
        return Err(WireError::Unexpected(
            "expected a handshake record".to_string(),
        ));
    }
    if header.version != PROTOCOL_VERSION_CLASSICAL {
        return Err(WireError::malformed(
            "finished must use the classical protocol version",
        ));
    }
    if body.len() != 4 + 32 || body[0] != HS_FINISHED {
        return Err(WireError::malformed("bad finished message"));
    }
    let msg_len = u32::from_be_bytes([0, body[1], body[2], body[3]]) as usize;
    if msg_len != 32 {
        return Err(WireError::malformed("bad finished length"));
    }
    Ok(body[4..].try_into().expect("len checked"))
}

/// Encodes an alert record.
pub fn encode_alert(code: AlertCode, version: u16) -> Vec<u8> {
    encode_record(REC_ALERT, version, &[code.as_u8()])
}

/// Decodes an alert record body (the header was already matched on type).
pub fn decode_alert(record: &[u8]) -> Result<AlertCode, WireError> {
    let (header, body) = decode_single_record(record)?;
    if header.content_type != REC_ALERT {
        return Err(WireError::Unexpected("expected an alert record".to_string()));
    }
    if body.len() != 1 {
        return Err(WireError::malformed("alert body must be one byte"));
    }
    AlertCode::from_u8(body[0])
        .ok_or_else(|| WireError::malformed(format!("unknown alert code {}", body[0])))
}

/// Content type of a framed record, for dispatch. Errors on short input.
pub fn peek_content_type(record: &[u8]) -> Result<u8, WireError> {
    record
        .first()
        .copied()
        .ok_or_else(|| WireError::malformed("empty record"))
}
