//! Seeded randomness. Every stochastic step in the crate draws from a
//! [`Rng`] the caller owns; nothing reads ambient entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator used for all sampling and initialization.
pub type Rng = ChaCha8Rng;

/// Algorithm name recorded in run metadata next to the seed.
pub const RNG_ALGORITHM: &str = "ChaCha8";

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for a sub-task (a track, a worker, a split).
pub fn derived(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
