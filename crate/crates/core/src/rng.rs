//! Seedable, splittable random number generation.
//!
//! Every stochastic routine in the crate takes an explicit [`RngState`]. The
//! generator is ChaCha8, a counter-based stream cipher: a `(seed, stream)` pair
//! fully determines the output, so independent chains obtain independent
//! streams via [`RngState::split`] and a run is bit-reproducible for a fixed
//! seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngState {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        RngState {
            inner: ChaCha8Rng::seed_from_u64(seed),
            seed,
            stream: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent generator for `stream`. The parent is left
    /// untouched; splitting the same parent twice with the same stream id
    /// yields identical generators, and splits of different parents differ.
    pub fn split(&self, stream: u64) -> RngState {
        // stream 0 is the root's own stream
        let id = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(stream.wrapping_add(1));
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(id);
        RngState {
            inner,
            seed: self.seed,
            stream: id,
        }
    }

    /// `(seed, stream, word position)`: enough to restore the generator
    /// exactly with [`RngState::restore`].
    pub fn position(&self) -> (u64, u64, u128) {
        (self.seed, self.stream, self.inner.get_word_pos())
    }

    pub fn restore(seed: u64, stream: u64, word_pos: u128) -> RngState {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        inner.set_word_pos(word_pos);
        RngState { inner, seed, stream }
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
