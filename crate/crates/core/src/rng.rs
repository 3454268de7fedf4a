//! Seeding for every stochastic generator.
//!
//! Streams are ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! generator: output block `n` is the ChaCha permutation of `(key, n)`, so a
//! stream is fully determined by its 64-bit seed. Seeds for individual
//! samples and layers are derived with the SplitMix64 finalizer, which makes
//! per-layer streams independent of generation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type WeatherRng = ChaCha8Rng;

/// SplitMix64 output function (Steele, Lea & Flood).
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into a single seed, one SplitMix64 round per part.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed of the parameter stream for sample `index`.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    derive_seed(&[master_seed, index])
}

/// Seed of layer `layer` of sample `index`.
pub fn layer_seed(master_seed: u64, index: u64, layer: u64) -> u64 {
    derive_seed(&[master_seed, index, layer.wrapping_add(1)])
}

pub fn rng_from_seed(seed: u64) -> WeatherRng {
    ChaCha8Rng::seed_from_u64(seed)
}
