//! Stable seed derivation.
//!
//! Every random stream in the pipeline is keyed by a master seed plus a
//! path of integers (repeat index, world index, label, ...). The mixing is
//! SplitMix64, so derived seeds do not depend on scheduling, thread count,
//! or the order in which streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of stream identifiers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &part| {
        splitmix64(acc ^ splitmix64(part))
    })
}

/// Deterministic generator for a derived stream.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Seed-stream tags so unrelated consumers never share a stream.
pub(crate) mod tag {
    pub const REPEAT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const BALANCE_TRAIN: u64 = 3;
    pub const BALANCE_TEST: u64 = 4;
    pub const WORLD: u64 = 5;
    pub const OVERSAMPLE: u64 = 6;
    pub const UNDERSAMPLE: u64 = 7;
    pub const SYNTH: u64 = 8;
}
