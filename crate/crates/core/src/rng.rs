//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value. Child seeds are derived with [`mix`], a SplitMix64-style finalizer
//! applied to `parent ^ (tag * GOLDEN)`. A stream therefore depends only on
//! its `(parent, tag)` pair and never on how many sibling streams were drawn
//! or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the child seed identified by `tag` from `parent`.
pub fn mix(parent: u64, tag: u64) -> u64 {
    finalize(parent ^ finalize(tag.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Derive a seed from a path of tags, e.g. `(scenario, replication, method)`.
pub fn mix_path(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |s, &t| mix(s, t))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
