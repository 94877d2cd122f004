//! Seeded, counter-based random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key packs the run seed
//! together with a `(purpose, epoch, batch)` triple, so the draws made for
//! one purpose never depend on how many draws another purpose made.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purposes that key independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Corruption = 4,
    Synth = 5,
    Test = 6,
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, Purpose::Test as u64, 0, 0)
    }

    /// Stream for `(purpose, epoch, batch)` under `seed`.
    pub fn stream(seed: u64, purpose: Purpose, epoch: u64, batch: u64) -> Self {
        Self::keyed(seed, purpose as u64, epoch, batch)
    }

    fn keyed(seed: u64, purpose: u64, epoch: u64, batch: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&purpose.to_le_bytes());
        key[16..24].copy_from_slice(&epoch.to_le_bytes());
        key[24..].copy_from_slice(&batch.to_le_bytes());
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.inner);
        idx
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub(crate) fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_stream() {
        let mut a = Rng::stream(7, Purpose::Dropout, 3, 1);
        let mut b = Rng::stream(7, Purpose::Dropout, 3, 1);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn purposes_are_independent() {
        let mut a = Rng::stream(7, Purpose::Dropout, 0, 0);
        let mut b = Rng::stream(7, Purpose::Corruption, 0, 0);
        let xa: Vec<f64> = (0..4).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..4).map(|_| b.uniform()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut r = Rng::new(1);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
