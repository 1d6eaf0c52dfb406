//! Seeded randomness. Every random construction in the crate takes an
//! explicit `u64` seed and draws from ChaCha8, a counter-based generator.
//! Independent child seeds are derived by selecting a distinct ChaCha
//! stream, so trial `i` of a run never shares a keystream with trial `j`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SketchRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SketchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` under key `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> SketchRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for index `index`, reproducible for a fixed `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    seeded_stream(base, index.wrapping_add(1)).next_u64()
}
