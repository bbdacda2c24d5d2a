//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded through [`derive`], so datasets and initializations are stable
//! across platforms and thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`, order-sensitively.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags so that independent consumers of one shuffle seed never
/// share a random stream.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const TRAIN_DATA: u64 = 2;
    pub const TEST_DATA: u64 = 3;
    pub const EMBEDDING: u64 = 4;
    pub const PROBE_INIT: u64 = 5;
    pub const TRAIN_ORDER: u64 = 6;
}
