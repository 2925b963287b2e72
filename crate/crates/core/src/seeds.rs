//! Structured seed derivation. Every random stream is keyed by a path of
//! integers (root seed, experiment, cell, run, firm, period, ...) so that
//! results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `parent` together with a sequence of child indices.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(parent), |acc, &k| mix(acc ^ mix(k)))
}

pub fn rng_for(parent: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parent, path))
}

/// Stream tags keep exploration, shock and sampling streams disjoint.
pub mod tag {
    pub const EXPLORE: u64 = 1;
    pub const SHOCK: u64 = 2;
    pub const MEANS: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const SHARE_NOISE: u64 = 5;
}
