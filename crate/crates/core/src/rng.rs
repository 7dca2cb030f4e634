//! Seeded random streams.
//!
//! Every random decision in the crate is drawn from a [`Stream`], so a run is
//! fully determined by its seeds. The recurrences are fixed and simple enough
//! to reimplement in any language:
//!
//! * **Generator**: xoshiro256++ (Blackman & Vigna). Its 256-bit state is
//!   initialised from a 64-bit seed by taking four consecutive outputs of
//!   SplitMix64 started at `x = seed`, where one SplitMix64 step is
//!
//!   ```text
//!   x = x + 0x9e3779b97f4a7c15                      (wrapping)
//!   z = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9        (wrapping)
//!   z = (z ^ (z >> 27)) * 0x94d049bb133111eb        (wrapping)
//!   return z ^ (z >> 31)
//!   ```
//!
//! * **Sub-streams**: `derive_seed(seed, tag)` returns the first SplitMix64
//!   output from `x = seed ^ mix(tag)`, with `mix` the output function above
//!   applied to `tag` directly. Streams are split by deriving a fresh seed,
//!   never by sharing a generator.
//! * **Unit uniform**: `(next_u64() >> 11) * 2^-53`, a value in `[0, 1)`.
//! * **Bounded integer** `below(n)`: Lemire's multiply-shift with rejection.
//!   Let `t = (2^64 - n) mod n`; draw `x`, form the 128-bit product `m = x * n`
//!   and retry while `low64(m) < t`; return `high64(m)`.
//! * **Standard normal**: Marsaglia's polar method. Draw `u = 2U - 1` and
//!   `v = 2U - 1` until `0 < s = u^2 + v^2 < 1`, return `u * sqrt(-2 ln(s) / s)`.
//!   The second deviate of the pair is discarded.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent seed for the sub-stream labelled `tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix((seed ^ mix(tag)).wrapping_add(GOLDEN_GAMMA))
}

/// Tags for the sub-streams used across the crate.
pub mod tags {
    pub const SPLIT: u64 = 0x5350_4c49_54;
    pub const FOREST: u64 = 0x464f_5245_5354;
    pub const GUIDE: u64 = 0x4755_4944_45;
    pub const SIMULATE: u64 = 0x5349_4d;
    /// Tree `k` of a forest uses `derive_seed(master, TREE_BASE + k)`.
    pub const TREE_BASE: u64 = 0x5452_4545_0000_0000;
}

/// A seeded xoshiro256++ stream with the derived draws documented above.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Stream for sub-stream `tag` of `seed`.
    pub fn derived(seed: u64, tag: u64) -> Self {
        Self::new(derive_seed(seed, tag))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// In-place Fisher-Yates shuffle, walking `i` from the end down to 1 and
    /// swapping with `below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)`: the first `k` slots of a partial
    /// Fisher-Yates pass over the identity permutation, swapping slot `i` with
    /// `i + below(n - i)`.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        self.partial_shuffle_into(&mut pool, k);
        pool.truncate(k);
        pool
    }

    pub(crate) fn partial_shuffle_into(&mut self, pool: &mut [usize], k: usize) {
        let n = pool.len();
        for i in 0..k.min(n) {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
    }
}
