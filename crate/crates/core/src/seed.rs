//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from a 64-bit
//! value. Replicate `i` of an experiment with master seed `m` uses
//! `mix64(m, i)`, where `mix64` is built from the SplitMix64 finalizer
//! (Steele, Lea and Flood, 2014):
//!
//! ```text
//! splitmix64(x):
//!     z = x + 0x9E3779B97F4A7C15
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!     return z ^ (z >> 31)
//!
//! mix64(master, index) = splitmix64(master ^ splitmix64(index))
//! ```
//!
//! All arithmetic wraps modulo 2^64. A `u64` seed is expanded into the
//! 32-byte ChaCha key with `SeedableRng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent sub-streams used inside a single replicate.
pub const STREAM_ENVIRONMENT: u64 = 0x454e_5649;
pub const STREAM_DYNAMICS: u64 = 0x4459_4e41;

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `index` under `master`.
#[inline]
pub fn mix64(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
