//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from an explicit 64-bit seed mixed with a stream path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each element of `path` into an independent child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x51_7C_C1_B7))))
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stable numeric tags for named streams.
pub(crate) mod stream {
    pub const GEOMETRY: u64 = 1;
    pub const PROBABILITIES: u64 = 2;
    pub const WORLD: u64 = 4;
    pub const ROLLOUT: u64 = 5;
    pub const ORACLE: u64 = 6;
    pub const STEP: u64 = 7;
    pub const DATASET: u64 = 8;
    pub const TREE: u64 = 9;
    pub const RETRY: u64 = 10;
    pub const SCALE: u64 = 11;
}
