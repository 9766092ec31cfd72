//! Uniform variate sources and seeded stream derivation.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Supplier of uniform draws on the open interval (0, 1).
///
/// Every stochastic primitive in the crate consumes randomness through this
/// trait so that tests can replay a hand-chosen uniform stream.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

impl<R: RngCore + ?Sized> UniformSource for R {
    fn next_uniform(&mut self) -> f64 {
        self.sample(Open01)
    }
}

/// Replays a fixed list of uniforms; panics when exhausted.
#[derive(Debug, Clone)]
pub struct ReplayUniforms {
    values: Vec<f64>,
    pos: usize,
}

impl ReplayUniforms {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl UniformSource for ReplayUniforms {
    fn next_uniform(&mut self) -> f64 {
        let u = *self
            .values
            .get(self.pos)
            .expect("replayed uniform stream exhausted");
        self.pos += 1;
        u
    }
}

/// Deterministic generator for `(seed, stream)`, used to give every replicate
/// or worker its own independent sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
