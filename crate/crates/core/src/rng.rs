//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a base seed mixed with the coordinates of the work item, so
//! results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream identified by `parts` under `seed`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Stream tags, kept distinct so unrelated draws never share a generator.
pub(crate) mod tag {
    pub const DESIGN: u64 = 1;
    pub const SUPPORT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const RESPONSE: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const RESAMPLE: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const METHOD: u64 = 8;
}
