//! Counter-addressed random streams.
//!
//! Every draw is a pure function of `(seed, stream, index)`: the ChaCha key comes from the seed,
//! the stream selects the ChaCha nonce, and the index selects a 64-word block. Results therefore do
//! not depend on thread scheduling or on the order in which draws are requested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A reproducible stream of independent draws.
#[derive(Debug, Clone)]
pub struct StreamRng {
    base: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream);
        Self { base }
    }

    fn at(&self, index: u64) -> ChaCha8Rng {
        let mut r = self.base.clone();
        r.set_word_pos(u128::from(index) * 64);
        r
    }

    /// Standard normal draw number `index`.
    pub fn normal(&self, index: u64) -> f64 {
        self.at(index).sample(StandardNormal)
    }

    /// Uniform draw on `[0, 1)` number `index`.
    pub fn uniform(&self, index: u64) -> f64 {
        self.at(index).random::<f64>()
    }

    /// A sequential generator positioned at block `index`, for bulk draws.
    pub fn sequential(&self, index: u64) -> ChaCha8Rng {
        self.at(index)
    }
}
