//! Seed derivation for per-key random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the key bytes; stable across platforms and releases.
fn fnv1a(key: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in key.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// An RNG whose stream depends only on `(seed, key)`.
pub(crate) fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(key).rotate_left(17))
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
