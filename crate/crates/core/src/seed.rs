//! Counter-based seed derivation.
//!
//! Every randomized step takes a `u64` seed derived from a parent seed and a
//! tag: `child = splitmix64(parent ^ splitmix64(tag))`. String tags are first
//! hashed with 64-bit FNV-1a. Children depend only on (parent, tag), so adding
//! a new run or ratio never changes the seeds of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Child seed for a numeric counter.
pub fn derive(parent: u64, counter: u64) -> u64 {
    splitmix64(parent ^ splitmix64(counter))
}

/// Child seed for a named stream.
pub fn derive_named(parent: u64, tag: &str) -> u64 {
    derive(parent, fnv1a(tag))
}

/// The RNG used for every randomized step in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
