//! Deterministic per-task random streams.
//!
//! Every replication, grid, or draw batch gets its own ChaCha stream derived from
//! `(seed, stream)`, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of the same seed apart.
pub mod tag {
    pub const DATA: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const GRID: u64 = 3;
    pub const CRITICAL: u64 = 4;
    pub const POSTERIOR: u64 = 5;
}

/// RNG for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Derive a child seed, used when a whole sub-computation needs its own seed.
pub fn child_seed(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
