//! Blocking drivers: run a handshake machine over a `Read + Write` transport
//! and expose the established session as a [`Connection`].

use std::io::{Read, Write};

use crate::alert::AlertCode;
use crate::consts::{
    MAX_RECORD_BODY, MAX_RECORD_PLAINTEXT, PROTOCOL_VERSION_CLASSICAL, PROTOCOL_VERSION_QKD,
    RECORD_HEADER_LEN, REC_ALERT, REC_APPLICATION_DATA,
};
use crate::handshake::{
    Established, EstablishedMode, HandshakeError, HsAction, MasterConfig, MasterHandshake,
    ModePolicy, SlaveConfig, SlaveHandshake,
};
use crate::kme::KmeAccess;
use crate::record::{RecordError, RecordProtection};
use crate::rng::HandshakeRng;
use crate::wire::{decode_alert, encode_alert, RecordHeader};

/// Failures on an established connection.
#[derive(Debug, thiserror::Error)]
pub enum ConnectionError {
    /// Transport failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Record protection failure (tampering, replay, version confusion…).
    #[error(transparent)]
    Record(#[from] RecordError),
    /// The peer sent an alert.
    #[error("peer sent alert: {0}")]
    PeerAlert(AlertCode),
    /// The peer closed the transport at a record boundary.
    #[error("connection closed by peer")]
    Closed,
    /// The peer sent a record type that has no meaning after the handshake.
    #[error("unexpected record type {0:#04x} on an established connection")]
    UnexpectedRecordType(u8),
}

/// An established TLS-QKD (or classical fallback) session over some
/// transport. All application data is AEAD-protected; [`Connection::send`]
/// fragments transparently.
pub struct Connection {
    mode: EstablishedMode,
    protection: RecordProtection,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Session keys never reach logs.
        f.debug_struct("Connection")
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl Connection {
    fn new(established: Established) -> Connection {
        Connection {
            mode: established.mode,
            protection: established.protection,
        }
    }

    /// The mode this session was established in.
    pub fn mode(&self) -> EstablishedMode {
        self.mode
    }

    /// Seals and writes `data`, fragmenting into records as needed.
    pub fn send<T: Write>(&mut self, io: &mut T, data: &[u8]) -> Result<(), ConnectionError> {
        for chunk in data.chunks(MAX_RECORD_PLAINTEXT) {
            let record = self.protection.seal(REC_APPLICATION_DATA, chunk)?;
            io.write_all(&record)?;
        }
        io.flush()?;
        Ok(())
    }

    /// Reads and opens the next application-data record, returning its
    /// plaintext. Returns [`ConnectionError::Closed`] on a clean EOF at a
    /// record boundary.
    pub fn recv<T: Read>(&mut self, io: &mut T) -> Result<Vec<u8>, ConnectionError> {
        let record = read_record(io)?.ok_or(ConnectionError::Closed)?;
        if record[0] == REC_ALERT {
            if let Ok(code) = decode_alert(&record) {
                return Err(ConnectionError::PeerAlert(code));
            }
        }
        let (content_type, plaintext) = self.protection.open(&record)?;
        if content_type != REC_APPLICATION_DATA {
            return Err(ConnectionError::UnexpectedRecordType(content_type));
        }
        Ok(plaintext)
    }

    /// Receives until exactly `len` bytes have been collected.
    pub fn recv_exact<T: Read>(&mut self, io: &mut T, len: usize) -> Result<Vec<u8>, ConnectionError> {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            out.extend(self.recv(io)?);
        }
        if out.len() != len {
            return Err(ConnectionError::Record(RecordError::Malformed(
                "peer sent more data than the expected length".to_string(),
            )));
        }
        Ok(out)
    }
}

/// Reads one complete record. `Ok(None)` on clean EOF before any header byte.
pub fn read_record<T: Read>(io: &mut T) -> std::io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; RECORD_HEADER_LEN];
    match read_exact_or_eof(io, &mut header)? {
        ReadOutcome::Eof => return Ok(None),
        ReadOutcome::Full => {}
    }
    let parsed = RecordHeader::parse(&header);
    let body_len = parsed.length as usize;
    if body_len > MAX_RECORD_BODY {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "incoming record exceeds the maximum body length",
        ));
    }
    let mut record = vec![0u8; RECORD_HEADER_LEN + body_len];
    record[..RECORD_HEADER_LEN].copy_from_slice(&header);
    io.read_exact(&mut record[RECORD_HEADER_LEN..])?;
    Ok(Some(record))
}

enum ReadOutcome {
    Full,
    Eof,
}

fn read_exact_or_eof<T: Read>(io: &mut T, buf: &mut [u8]) -> std::io::Result<ReadOutcome> {
    let mut filled = 0;
    while filled < buf.len() {
        match io.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(ReadOutcome::Eof),
            Ok(0) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "transport closed mid-record",
                ))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(ReadOutcome::Full)
}

fn version_for_alert(policy: ModePolicy) -> u16 {
    match policy {
        ModePolicy::ClassicalOnly => PROTOCOL_VERSION_CLASSICAL,
        _ => PROTOCOL_VERSION_QKD,
    }
}

/// Runs a complete master handshake over `io`, satisfying KME requests via
/// `kme`. On failure an alert record is sent (best effort) before returning.
pub fn run_master_handshake<T: Read + Write>(
    io: &mut T,
    kme: &mut dyn KmeAccess,
    config: MasterConfig,
    rng: Box<dyn HandshakeRng>,
) -> Result<Connection, HandshakeError> {
    let mut machine = MasterHandshake::new(config, rng);
    let alert_version = version_for_alert(config.policy);
    let mut pending = machine.start();
    loop {
        let actions = match pending {
            Ok(a) => a,
            Err(e) => return abort(io, e, alert_version),
        };
        let mut established = None;
        let mut next = None;
        for action in actions {
            match action {
                HsAction::SendRecord(record) => {
                    io.write_all(&record).map_err(io_to_hs)?;
                    io.flush().map_err(io_to_hs)?;
                }
                HsAction::KmeRequest(request) => {
                    let reply = kme.perform(&request);
                    next = Some(machine.on_kme_reply(reply));
                }
                HsAction::Established(e) => established = Some(*e),
            }
        }
        if let Some(established) = established {
            return Ok(Connection::new(established));
        }
        pending = match next {
            Some(p) => p,
            None => match read_record(io).map_err(io_to_hs)? {
                Some(record) => machine.on_record(&record),
                None => Err(HandshakeError::Protocol(
                    "peer closed the transport mid-handshake".to_string(),
                )),
            },
        };
    }
}

/// Runs a complete slave handshake over `io`, satisfying KME requests via
/// `kme`. On failure an alert record is sent (best effort) before returning.
pub fn run_slave_handshake<T: Read + Write>(
    io: &mut T,
    kme: &mut dyn KmeAccess,
    config: SlaveConfig,
    rng: Box<dyn HandshakeRng>,
) -> Result<Connection, HandshakeError> {
    let mut machine = SlaveHandshake::new(config, rng);
    let alert_version = version_for_alert(config.policy);
    loop {
        let record = match read_record(io).map_err(io_to_hs) {
            Ok(Some(r)) => r,
            Ok(None) => {
                return Err(HandshakeError::Protocol(
                    "peer closed the transport mid-handshake".to_string(),
                ))
            }
            Err(e) => return abort(io, e, alert_version),
        };
        let mut pending = machine.on_record(&record);
        loop {
            let actions = match pending {
                Ok(a) => a,
                Err(e) => return abort(io, e, alert_version),
            };
            let mut established = None;
            let mut next = None;
            for action in actions {
                match action {
                    HsAction::SendRecord(record) => {
                        io.write_all(&record).map_err(io_to_hs)?;
                        io.flush().map_err(io_to_hs)?;
                    }
                    HsAction::KmeRequest(request) => {
                        let reply = kme.perform(&request);
                        next = Some(machine.on_kme_reply(reply));
                    }
                    HsAction::Established(e) => established = Some(*e),
                }
            }
            if let Some(established) = established {
                return Ok(Connection::new(established));
            }
            match next {
                Some(p) => pending = p,
                None => break, // need the next record from the wire
            }
        }
    }
}

fn io_to_hs(e: std::io::Error) -> HandshakeError {
    HandshakeError::Internal(format!("transport error: {e}"))
}

fn abort<T: Write>(
    io: &mut T,
    error: HandshakeError,
    version: u16,
) -> Result<Connection, HandshakeError> {
    if let Some(code) = error.alert_to_send() {
        // Best effort: the peer may already be gone.
        let _ = io.write_all(&encode_alert(code, version));
        let _ = io.flush();
    }
    Err(error)
}
