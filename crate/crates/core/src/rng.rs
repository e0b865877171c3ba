//! Seeded random streams.
//!
//! All randomness comes from SplitMix64: a 64-bit counter advanced by the
//! golden-ratio increment `0x9E3779B97F4A7C15`, finalized with the multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB` (shifts 30, 27, 31).
//! Independent consumers (initialization, shuffling, augmentation) draw from
//! distinct streams derived from one user seed.

use rand::SeedableRng;
pub use rand_xoshiro::SplitMix64;

/// Stream identifiers mixed into the user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Split = 2,
    Shuffle = 3,
    Augment = 4,
}

pub fn stream(seed: u64, which: Stream) -> SplitMix64 {
    SplitMix64::seed_from_u64(mix(seed ^ mix(which as u64)))
}

/// One SplitMix64 finalization step.
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
