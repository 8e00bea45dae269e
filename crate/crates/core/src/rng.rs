//! Seeded random number generation.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`] built here, so
//! a single top-level seed controls a whole experiment. Independent streams
//! (trials, restarts) come from [`child_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for a top-level seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of stream `index` from `seed` (SplitMix64 finalizer over
/// the pair). The mapping is fixed so results do not depend on scheduling.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
