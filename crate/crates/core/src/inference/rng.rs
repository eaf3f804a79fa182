//! Seed splitting.
//!
//! A master seed fans out in two steps. [`child_seed`] derives an
//! independent 64-bit seed per replicate (SplitMix64 of `master + index`),
//! and [`stream`] opens ChaCha8 stream `id` under a seed. Chains use
//! streams `1..=chains`; stream 0 is reserved for data generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child `index` of `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// ChaCha8 generator on stream `id` of `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generator for chain `chain` (0-based) under `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    stream(seed, chain as u64 + 1)
}
