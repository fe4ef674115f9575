//! Deterministic RNG streams.
//!
//! Every stochastic draw comes from a ChaCha stream keyed by a tuple of
//! integers (seed, purpose, epoch, index ...), so results do not depend on
//! iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purposes. Distinct tags keep training, validation and evaluation
/// draws independent of one another.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const TRAIN_SAMPLE: u64 = 3;
    pub const VALIDATION: u64 = 4;
    pub const CORRUPTION: u64 = 5;
    pub const ATTACK_EVAL: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const DATA: u64 = 8;
    pub const PREVIEW: u64 = 9;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a key path into a single 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5851_F42D_4C95_7F2D, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(parts))
}
