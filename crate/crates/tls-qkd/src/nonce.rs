//! Per-record nonce derivation.
//!
//! A connection derives every AEAD nonce from the 12-byte base IV announced
//! in the ClientHello, the direction of the record, and the record's sequence
//! number:
//!
//! ```text
//! nonce[0]     = base_iv[0] xor direction      (0x00 master→slave, 0x80 slave→master)
//! nonce[1..4]  = base_iv[1..4]
//! nonce[4..12] = base_iv[4..12] xor seq_be64
//! ```
//!
//! The direction bit and the sequence counter make every (direction, seq)
//! pair map to a distinct nonce under the same key, which is what AES-GCM
//! requires; the challenge and its ack consume sequence 0 of their respective
//! directions and application records count from 1.

use crate::consts::BASE_IV_LEN;

/// Direction of a protected record between the two SAEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// From the TLS client (QKD master) to the TLS server (QKD slave).
    MasterToSlave,
    /// From the TLS server (QKD slave) to the TLS client (QKD master).
    SlaveToMaster,
}

impl Direction {
    /// XOR mask applied to the first nonce byte.
    pub fn mask(self) -> u8 {
        match self {
            Direction::MasterToSlave => 0x00,
            Direction::SlaveToMaster => 0x80,
        }
    }

    /// The opposite direction.
    pub fn flip(self) -> Direction {
        match self {
            Direction::MasterToSlave => Direction::SlaveToMaster,
            Direction::SlaveToMaster => Direction::MasterToSlave,
        }
    }
}

/// Derives the nonce for one record.
pub fn derive_nonce(base_iv: &[u8; BASE_IV_LEN], direction: Direction, seq: u64) -> [u8; BASE_IV_LEN] {
    let mut nonce = *base_iv;
    nonce[0] ^= direction.mask();
    for (byte, seq_byte) in nonce[4..12].iter_mut().zip(seq.to_be_bytes()) {
        *byte ^= seq_byte;
    }
    nonce
}
