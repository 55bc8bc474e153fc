//! Randomness injection for the handshake machines.
//!
//! The machines never touch the OS RNG directly; callers hand them a
//! [`HandshakeRng`], which real deployments back with a cryptographically
//! secure generator and deterministic simulations back with a seeded one.

/// Byte source for handshake randomness (hello randoms, IVs, tokens, seeds,
/// ephemeral DH secrets).
pub trait HandshakeRng: Send {
    /// Fills `dest` with random bytes.
    fn fill_bytes(&mut self, dest: &mut [u8]);
}

impl<T: rand::RngCore + Send> HandshakeRng for T {
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand::RngCore::fill_bytes(self, dest)
    }
}

/// Convenience: fills and returns a fixed-size array.
pub(crate) fn random_array<const N: usize>(rng: &mut dyn HandshakeRng) -> [u8; N] {
    let mut out = [0u8; N];
    rng.fill_bytes(&mut out);
    out
}
