//! Per-path random streams.
//!
//! Every path owns the ChaCha8 stream numbered by its index under a common seed, so a path's
//! increments depend only on `(seed, path)` and never on which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct PathRng(ChaCha8Rng);

impl PathRng {
    pub fn new(seed: u64, path: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self(rng)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}
