//! Uniform random draws for the swarm.
//!
//! Runs draw from a counter-based ChaCha8 stream: the `k`-th draw of a seed
//! is a pure function of `(seed, k)`, so a run can be resumed at any draw
//! index and parallel runs never share state.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A source of uniform reals in `[0, 1)`.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;

    /// Number of draws consumed so far.
    fn draws(&self) -> u64;
}

/// Deterministic per-seed stream; each draw carries 53 random bits.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// The stream of `seed` positioned just before draw number `counter`.
    pub fn at(seed: u64, counter: u64) -> Self {
        let mut stream = RngStream::new(seed);
        // Each draw consumes one u64, i.e. two 32-bit words of the block stream.
        stream.inner.set_word_pos(u128::from(counter) * 2);
        stream.counter = counter;
        stream
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

impl UniformSource for RngStream {
    fn next_uniform(&mut self) -> f64 {
        self.counter += 1;
        (self.inner.next_u64() >> 11) as f64 * UNIT
    }

    fn draws(&self) -> u64 {
        self.counter
    }
}

/// Replays a fixed list of draws, cycling when exhausted; handy for
/// hand-traced examples and tests.
#[derive(Debug, Clone)]
pub struct ScriptedSource {
    values: Vec<f64>,
    counter: u64,
}

impl ScriptedSource {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "scripted source needs at least one value");
        ScriptedSource { values, counter: 0 }
    }
}

impl UniformSource for ScriptedSource {
    fn next_uniform(&mut self) -> f64 {
        let value = self.values[(self.counter % self.values.len() as u64) as usize];
        self.counter += 1;
        value
    }

    fn draws(&self) -> u64 {
        self.counter
    }
}
