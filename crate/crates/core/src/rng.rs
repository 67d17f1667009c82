//! Seed derivation helpers.
//!
//! Every stochastic component takes an explicit `u64` seed and derives its
//! own ChaCha stream from it, so independent components never share RNG
//! state and results are bit-identical across runs and thread counts.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// SplitMix64 finalizer; decorrelates seeds that differ in a single bit.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed for a named stream (draw index, device id, ...).
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xa076_1d64_78bd_642f)))
}

/// Deterministic RNG for a (seed, stream) pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(seed, stream))
}

/// Deterministic RNG for a bare seed.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
