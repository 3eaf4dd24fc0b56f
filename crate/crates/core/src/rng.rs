//! Seedable random stream shared by every generator in the crate.
//!
//! The stream is fully specified so that other implementations can replay it:
//!
//! * Core generator: xoshiro256** whose 256-bit state is the first four
//!   outputs of SplitMix64 started at `seed`.
//! * `uniform()`: the top 53 bits of the next word scaled by 2^-53, in [0, 1).
//! * `below(n)`: rejection sampling. Draw a word `x`; reject while
//!   `x < (2^64 - n) mod n`; return `x mod n`.
//! * `normal()`: Marsaglia's polar method. Draw `u = 2*uniform() - 1`, then
//!   `v = 2*uniform() - 1`; reject while `s = u^2 + v^2` is `0` or `>= 1`.
//!   With `f = sqrt(-2 ln s / s)` the call returns `u*f` and caches `v*f`,
//!   which the next call returns without consuming the stream.
//! * `shuffle()`: Fisher-Yates from the last index down, `j = below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    splitmix64_finalize(*state)
}

fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for sub-stream `index` of `base`.
///
/// `mix(b, i) = splitmix64_finalize(b + GOLDEN_GAMMA * (i + 1))` with
/// wrapping arithmetic.
pub fn mix(base: u64, index: u64) -> u64 {
    splitmix64_finalize(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256StarStar,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64_next(&mut sm).to_le_bytes());
        }
        Rng {
            seed,
            inner: Xoshiro256StarStar::from_seed(bytes),
            spare_normal: None,
        }
    }

    /// A fresh generator for sub-stream `index`, seeded with `mix(seed, index)`.
    pub fn derive(&self, index: u64) -> Rng {
        Rng::new(mix(self.seed, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    /// `k` distinct values from `0..n` in uniformly random order
    /// (partial Fisher-Yates over the front of the index array).
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "choose_distinct: k > n");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below_usize(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
