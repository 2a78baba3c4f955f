//! Named random streams derived from a single master seed.
//!
//! Every consumer of randomness gets its own ChaCha stream so that adding or
//! removing draws in one place never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    PolicyInit = 1,
    ValueInit = 2,
    VaeInit = 3,
    VaeNoise = 4,
    Actions = 5,
    LevelSampling = 6,
    Shuffle = 7,
    TestSeeds = 8,
    Evaluation = 9,
}

pub fn stream(master_seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(which as u64);
    rng
}
