//! Reproducible random streams for simulation.
//!
//! Each trial owns an independent ChaCha8 stream: the key comes from the
//! base seed and the stream id is the trial index. Q-learning consumes one
//! 64-bit word per state-action pair per iteration, so the draw for
//! `(iteration k, pair i)` sits at a fixed counter position and results do
//! not depend on how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self { rng }
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Positions the stream at the first draw of iteration `k` (1-based)
    /// when every iteration consumes `draws_per_iter` uniforms.
    pub fn seek_iteration(&mut self, k: u64, draws_per_iter: usize) {
        let draws = (k.saturating_sub(1) as u128) * draws_per_iter as u128;
        // one f64 draw = one u64 = two 32-bit words
        self.rng.set_word_pos(draws * 2);
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
