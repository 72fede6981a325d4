//! Seed derivation. Every random decision in a run draws from a generator
//! keyed by (run seed, purpose, step) so that adding randomness in one place
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::fnv1a64;

pub type Rng = ChaCha8Rng;

/// Purposes that own an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Select = 3,
    Fisher = 4,
    Cluster = 5,
    Split = 6,
    Generate = 7,
    Rebalance = 8,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, purpose: Purpose, step: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ purpose as u64) ^ step)
}

pub fn stream(seed: u64, purpose: Purpose, step: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, purpose, step))
}

/// Order-independent random key of a sample id. Taking the `m` smallest keys
/// of a set draws a uniform random `m`-subset that does not depend on the
/// order in which the set was presented.
pub fn sample_key(seed: u64, id: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(id.as_bytes()))
}
