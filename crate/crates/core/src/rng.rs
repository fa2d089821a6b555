//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], which is ChaCha8
//! (`rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64`. ChaCha8 output is
//! specified independently of platform word size, and all bounded draws below
//! are made on explicit `u32`/`u64` types, so a seed produces the same
//! matrices, splits and weight initialisations everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from `0..n`. `n` must be nonzero.
#[inline]
pub fn below(rng: &mut SeededRng, n: u32) -> u32 {
    debug_assert!(n > 0);
    rng.random_range(0..n)
}

/// Uniform draw from `[0, 1)`.
#[inline]
pub fn unit(rng: &mut SeededRng) -> f64 {
    rng.random::<f64>()
}

/// SplitMix64 finaliser. Used to derive well-spread 64-bit values from small
/// integers (sub-seeds, hash inputs).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-stream of `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}
