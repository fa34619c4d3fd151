//! Seedable, splittable random streams.
//!
//! Every stochastic procedure takes an explicit [`ChainRng`]. Independent
//! jobs (restarts, chains, folds) get their own stream of the same seed via
//! [`stream`], so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Identifier recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9/seed_from_u64+set_stream";

pub fn seeded(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of `seed`; stream 0 is identical to [`seeded`].
pub fn stream(seed: u64, index: u64) -> ChainRng {
    let mut rng = seeded(seed);
    rng.set_stream(index);
    rng
}
