//! Deterministic stream derivation.
//!
//! Every random quantity in an experiment draws from a ChaCha stream whose
//! seed is derived from a base seed and a path of integer tags. Reruns with
//! the same master seed therefore reproduce byte-identical outputs, and
//! independent work items (records, weight combinations, replicates) get
//! independent streams regardless of the order they are computed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags naming the branches of the derivation tree. Values are arbitrary but
/// frozen: changing them changes every derived stream.
pub mod tag {
    pub const RECORD: u64 = 1;
    pub const NOVEL: u64 = 2;
    pub const FAMILY: u64 = 3;
    pub const COMBO: u64 = 4;
    pub const SCENARIO: u64 = 5;
    pub const TEST_SET: u64 = 6;
    pub const LOFI: u64 = 7;
    pub const HIFI: u64 = 8;
    pub const LOWER_BOUND: u64 = 9;
    pub const PREDICT: u64 = 10;
    pub const ENCOUNTER: u64 = 11;
    pub const MIX: u64 = 12;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and one tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derive a child seed along a path of tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| mix(acc, t))
}

/// The RNG used for every derived stream. ChaCha8 is seedable from a u64 and
/// its output is stable across platforms and library releases.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
