//! Deterministic seed derivation.
//!
//! Every stochastic unit of work (a replicate, a location's null sample) gets a
//! child seed that depends only on the master seed and the unit's key, never on
//! the order in which units are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type StmeRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a path of indices.
pub fn child_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &k| {
        splitmix64(acc ^ splitmix64(k))
    })
}

pub fn rng_from_seed(seed: u64) -> StmeRng {
    StmeRng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, path: &[u64]) -> StmeRng {
    rng_from_seed(child_seed(master, path))
}
