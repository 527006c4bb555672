//! Seedable, splittable random streams.
//!
//! Every stream is a ChaCha8 instance keyed by the experiment seed with a
//! distinct 64-bit stream id, so components never share state and a run is
//! fully determined by its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const TRAIN_DATA: u64 = 2;
    pub const EVAL_DATA: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const PERM_TABLE: u64 = 5;
    pub const TEST_DATA: u64 = 6;
    pub const PATTERNS: u64 = 7;
}

/// A generator for `seed` on sub-stream `stream`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. one per batch instance.
pub fn split(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
