//! Named, counter-based random streams derived from a single run seed.
//!
//! Every stochastic stage draws from `stream(seed, label, counter)`, so a
//! result depends only on the seed and its position in the computation, never
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derive a child seed for a named stage.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(label)))
}

/// Derive a child seed for item `counter` of a stage.
pub fn derive_indexed(seed: u64, label: &str, counter: u64) -> u64 {
    splitmix64(derive_seed(seed, label) ^ splitmix64(counter.wrapping_add(1)))
}

pub fn stream(seed: u64, label: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

pub fn indexed_stream(seed: u64, label: &str, counter: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_indexed(seed, label, counter))
}
