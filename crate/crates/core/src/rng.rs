//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed, so per-learner sampling is independent of how many draws any
//! other learner (or the mixing schedule) makes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const MIXING_STREAM: u64 = 0;
const DATA_STREAM: u64 = u64::MAX;

/// Stream used to draw mixing matrices (ring permutations).
pub fn mixing_stream(seed: u64) -> StreamRng {
    stream(seed, MIXING_STREAM)
}

/// Stream owned by one learner for mini-batch sampling.
pub fn learner_stream(seed: u64, learner: usize) -> StreamRng {
    stream(seed, learner as u64 + 1)
}

/// Stream used for synthetic data generation.
pub fn data_stream(seed: u64) -> StreamRng {
    stream(seed, DATA_STREAM)
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
