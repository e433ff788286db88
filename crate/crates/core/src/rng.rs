//! Portable seeded randomness.
//!
//! Every random choice in the workbench goes through [`SplitMix64`] so that
//! golden files reproduce bit-for-bit on any platform and in any language
//! that implements the same three operations:
//!
//! - `next_u64`: `state += 0x9E3779B97F4A7C15`, then the SplitMix64 finalizer
//!   with multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB` and
//!   shifts 30, 27, 31.
//! - `below(n)`: rejection sampling; draws `x` until `x >= (2^64 - n) mod n`,
//!   then returns `x mod n`.
//! - derived seeds: `derive_seed(seed, stream)` is the first output of a
//!   generator seeded with `seed ^ (stream * 0xD1B54A32D192ED03)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MIX: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) has no valid outcome");
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

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// The first `k` entries of a forward Fisher-Yates shuffle of `0..n`.
    ///
    /// The prefix of length `k` does not depend on how far the shuffle is
    /// carried beyond `k`, so prefixes for increasing `k` under one seed are
    /// nested.
    pub fn permutation_prefix(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut items: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below_usize(n - i);
            items.swap(i, j);
        }
        items.truncate(k);
        items
    }
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    SplitMix64::new(seed ^ stream.wrapping_mul(STREAM_MIX)).next_u64()
}
