//! Counter-based seed derivation.
//!
//! Every random stream is identified by a base seed plus a path of counters
//! (replication index, stream tag, feature index...), so results do not depend
//! on the order in which workers pick up tasks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix `base` with a path of counters into a new 64-bit seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// The generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used inside one simulated replication.
pub mod stream {
    pub const DESIGN: u64 = 1;
    pub const COEFFICIENTS: u64 = 2;
    pub const RESPONSE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const HSIC: u64 = 5;
    pub const COLUMNS: u64 = 6;
}
