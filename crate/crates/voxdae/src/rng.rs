//! Seed derivation and deterministic random streams.
//!
//! All randomness in the system flows from a single 64-bit experiment seed.
//! Sub-streams (weight init, per-epoch shuffling, per-sample corruption
//! masks, ...) derive their own seeds by hashing the root seed together with
//! a purpose string and optional indices, so adding or reordering consumers
//! never perturbs unrelated streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte slice. Used for seed derivation and for the
/// config/checkpoint content hashes that appear in reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a sub-seed from `(seed, purpose)`.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + purpose.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(purpose.as_bytes());
    fnv1a64(&buf)
}

/// Derives a sub-seed from `(seed, purpose, indices...)`.
pub fn derive_seed_indexed(seed: u64, purpose: &str, indices: &[u64]) -> u64 {
    let mut buf = Vec::with_capacity(8 + purpose.len() + 8 * indices.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(purpose.as_bytes());
    for &i in indices {
        buf.extend_from_slice(&i.to_le_bytes());
    }
    fnv1a64(&buf)
}

/// A deterministic generator for the given `(seed, purpose)` stream.
pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose))
}

/// A deterministic generator for the given `(seed, purpose, indices)` stream.
pub fn stream_indexed(seed: u64, purpose: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed_indexed(seed, purpose, indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    #[test]
    fn derivation_is_stable_and_purpose_sensitive() {
        assert_eq!(derive_seed(7, "init"), derive_seed(7, "init"));
        assert_ne!(derive_seed(7, "init"), derive_seed(7, "shuffle"));
        assert_ne!(derive_seed(7, "init"), derive_seed(8, "init"));
        assert_ne!(
            derive_seed_indexed(7, "mask", &[0, 1]),
            derive_seed_indexed(7, "mask", &[1, 0])
        );
    }

    #[test]
    fn streams_replay() {
        let a: Vec<u64> = (0..4).map(|_| 0).collect();
        let mut s1 = stream(42, "x");
        let mut s2 = stream(42, "x");
        let v1: Vec<u64> = a.iter().map(|_| s1.next_u64()).collect();
        let v2: Vec<u64> = a.iter().map(|_| s2.next_u64()).collect();
        assert_eq!(v1, v2);
    }
}
