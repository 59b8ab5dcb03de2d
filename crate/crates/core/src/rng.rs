//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is the tuple
//! `(seed, index, purpose)`. Particle streams use the particle id as the
//! index, replicate loops use the replicate number, so the numbers a particle
//! or replicate consumes never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes give unrelated streams for
/// the same `(seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Branch clock and diffusion increments of one particle.
    Motion = 1,
    /// Residual boundary exit sample of one particle.
    Exit = 2,
    /// Seed of the `index`-th replicate of a Monte Carlo loop.
    Replicate = 3,
    /// Single-particle paths used on the right-hand side of identities.
    SinglePath = 4,
    /// Uniform choices (marked lineages and the like).
    Choice = 5,
    /// Anything else a caller wants to keep separate.
    Auxiliary = 6,
}

/// Builds the generator keyed on `(seed, index, purpose)`.
pub fn stream(seed: u64, index: u128, purpose: Purpose) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Seed of the `index`-th child of `seed` under a tag; used to give each
/// replicate its own independent simulation seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)).wrapping_add(index))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
