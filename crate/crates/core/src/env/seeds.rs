use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{stream, Stream};

/// Exclusive upper bound of the level-seed space.
pub const SEED_SPACE: u64 = 1 << 32;

/// Finite training levels `0..train_count`; test levels drawn from the rest of the seed space.
#[derive(Debug, Clone)]
pub struct SeedSplit {
    train_count: u64,
}

impl SeedSplit {
    pub fn new(train_count: u64) -> Self {
        assert!((1..SEED_SPACE).contains(&train_count), "train_count out of range");
        SeedSplit { train_count }
    }

    pub fn train_count(&self) -> u64 {
        self.train_count
    }

    pub fn train_seeds(&self) -> Range<u64> {
        0..self.train_count
    }

    pub fn is_train(&self, seed: u64) -> bool {
        seed < self.train_count
    }

    pub fn test_sampler(&self, meta_seed: u64) -> TestSampler {
        TestSampler {
            low: self.train_count,
            rng: stream(meta_seed, Stream::TestSeeds),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestSampler {
    low: u64,
    rng: ChaCha8Rng,
}

impl TestSampler {
    pub fn sample(&mut self) -> u64 {
        self.rng.gen_range(self.low..SEED_SPACE)
    }
}

impl Iterator for TestSampler {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        Some(self.sample())
    }
}
