//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a seed derived from a user seed plus a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent seeds for each source of randomness in a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub net: u64,
    pub head: u64,
    pub kmeans: u64,
    pub sampler: u64,
}

impl Seeds {
    /// All four streams derived from one seed.
    pub fn from_base(base: u64) -> Self {
        Self {
            net: derive_seed(base, 1),
            head: derive_seed(base, 2),
            kmeans: derive_seed(base, 3),
            sampler: derive_seed(base, 4),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(0)
    }
}

/// Mixes `base` and `stream` into a new 64-bit seed (splitmix64 finalizer
/// over both words).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: u64) -> ChaCha8Rng {
    rng(derive_seed(base, stream))
}
