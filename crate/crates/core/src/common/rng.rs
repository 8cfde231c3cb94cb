use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Seeding policy for one trial. The ChaCha stream id is the trial index, so
/// trial `i` draws the same increments whether batches run serially or in
/// parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub base_seed: u64,
    pub trial_index: u64,
}

impl RngPolicy {
    pub fn new(base_seed: u64, trial_index: u64) -> Self {
        Self { base_seed, trial_index }
    }

    pub fn stream(&self, dt: f64) -> BrownianStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.trial_index);
        BrownianStream { rng, scale: dt.sqrt() }
    }
}

/// Infinite stream of Normal(0, dt) increments.
#[derive(Debug, Clone)]
pub struct BrownianStream {
    rng: ChaCha8Rng,
    scale: f64,
}

impl BrownianStream {
    #[inline]
    pub fn next_increment(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * self.scale
    }
}

impl Iterator for BrownianStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_increment())
    }
}

/// `n` independent Normal(0, dt) draws for `policy`.
pub fn gaussian_increments(policy: RngPolicy, n: usize, dt: f64) -> Vec<f64> {
    policy.stream(dt).take(n).collect()
}
