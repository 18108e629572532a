//! Seeded uniform streams.
//!
//! A kernel draws its uniform blocks from one ChaCha8 stream per
//! `(kernel, input, seed)`. Independent streams for batched work are derived
//! by mixing the base seed with a record or shard index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over `seed` and `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A block of `d` uniforms in `[0, 1)`.
pub fn uniform_block(rng: &mut Stream, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}
