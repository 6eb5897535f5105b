//! Stable keyed hashes of record ids.
//!
//! Values are the first 8 bytes (big endian) of
//! `SHA-256(domain || 0x00 || seed_le64 || id)`, so they never change across
//! platforms, releases or worker counts.

use sha2::{Digest, Sha256};

pub fn id_hash(seed: u64, domain: &str, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Uniform value in `[0, 1)` from the top 53 bits of [`id_hash`].
pub fn unit_interval(seed: u64, domain: &str, id: &str) -> f64 {
    (id_hash(seed, domain, id) >> 11) as f64 / (1u64 << 53) as f64
}
