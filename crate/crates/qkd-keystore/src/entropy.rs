//! Order-0 entropy estimation over stored key material.
//!
//! The QKD post-processing chain is supposed to emit uniformly random bytes;
//! a pool whose byte distribution is visibly skewed indicates a broken or
//! misconfigured source. The admin interface exposes this estimate so an
//! operator can spot such a failure without ever exporting material.

use serde::{Deserialize, Serialize};

use crate::key::KmeId;

/// Entropy summary for one peer KME's material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Peer KME the material belongs to.
    pub peer_kme_id: KmeId,
    /// Total number of material bytes the estimate was computed over,
    /// regardless of key lifecycle state.
    pub total_bytes: u64,
    /// Shannon entropy of the byte frequency distribution, in bits per byte.
    /// Ranges from 0.0 (constant) to 8.0 (uniform).
    pub entropy_bits_per_byte: f64,
}

/// Computes the order-0 Shannon entropy of a byte stream in bits per byte.
///
/// Returns 0.0 for an empty stream; callers that need to distinguish "no
/// material" should check for emptiness themselves.
pub fn byte_entropy<'a, I>(chunks: I) -> (u64, f64)
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut counts = [0u64; 256];
    let mut total: u64 = 0;
    for chunk in chunks {
        for &byte in chunk {
            counts[byte as usize] += 1;
        }
        total += chunk.len() as u64;
    }
    if total == 0 {
        return (0, 0.0);
    }
    let total_f = total as f64;
    let mut entropy = 0.0f64;
    for &count in counts.iter() {
        if count == 0 {
            continue;
        }
        let p = count as f64 / total_f;
        entropy -= p * p.log2();
    }
    // A single-symbol stream accumulates -(1.0 * log2(1.0)) == -0.0;
    // normalize so callers and serializers see a plain 0.0.
    if entropy == 0.0 {
        entropy = 0.0;
    }
    (total, entropy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stream_has_zero_entropy() {
        let zeros = [0u8; 4096];
        let (total, h) = byte_entropy([zeros.as_slice()]);
        assert_eq!(total, 4096);
        assert_eq!(h, 0.0);
        assert!(h.is_sign_positive(), "entropy must not be -0.0");
    }

    #[test]
    fn two_symbol_stream_has_exactly_one_bit() {
        let mut data = [0u8; 512];
        for (i, byte) in data.iter_mut().enumerate() {
            *byte = if i % 2 == 0 { 0x00 } else { 0xff };
        }
        let (_, h) = byte_entropy([data.as_slice()]);
        assert!((h - 1.0).abs() < 1e-12, "expected 1.0, got {h}");
    }

    #[test]
    fn uniform_stream_has_exactly_eight_bits() {
        let mut data = Vec::with_capacity(256 * 7);
        for round in 0..7 {
            let _ = round;
            data.extend(0u8..=255u8);
        }
        let (_, h) = byte_entropy([data.as_slice()]);
        assert!((h - 8.0).abs() < 1e-12, "expected 8.0, got {h}");
    }

    #[test]
    fn empty_stream_reports_zero() {
        let (total, h) = byte_entropy(std::iter::empty());
        assert_eq!(total, 0);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn chunking_does_not_change_the_estimate() {
        let data: Vec<u8> = (0..999u32).map(|i| (i * 31 % 251) as u8).collect();
        let (t1, h1) = byte_entropy([data.as_slice()]);
        let (t2, h2) = byte_entropy(data.chunks(13));
        assert_eq!(t1, t2);
        assert_eq!(h1, h2);
    }
}
