//! Seed derivation.
//!
//! Child seeds are `splitmix64(parent ^ splitmix64(stream))`. Every random
//! draw in the crate goes through a `ChaCha8Rng` seeded this way, so results
//! depend only on the campaign seed and the stream labels below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels.
pub mod stream {
    pub const UNLABELED: u64 = 1;
    pub const TEST: u64 = 2;
    pub const PSEUDO_SHUFFLE: u64 = 3;
    pub const RANDOMIZE: u64 = 4;
    pub const LEARNER: u64 = 5;
    pub const INITIAL: u64 = 6;
    pub const TRIAL: u64 = 7;
    pub const POPULATION: u64 = 8;
    pub const MISLABEL: u64 = 9;
    pub const CLEAN: u64 = 10;
}
