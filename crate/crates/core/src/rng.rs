//! Seed derivation for independent random streams.
//!
//! Dataset-level operations (poisoning, batched detection, experiment trials)
//! must not share one sequential RNG: results would then depend on iteration
//! order and batch composition. Instead, every per-item stream is seeded by
//! mixing a master seed with the item's index through a fixed 64-bit mixer,
//! so item `i` sees the same stream no matter what was processed before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a child seed from `master` and a stream index.
///
/// Uses the splitmix64 finalizer over `master ^ (index + 1) * φ64`; the `+ 1`
/// keeps index 0 from passing `master` through unmixed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic stream for the given seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
