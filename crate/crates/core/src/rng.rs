//! Reproducible random streams.
//!
//! Every random draw in the toolkit comes from [`SplitMix64`], a 64-bit
//! counter-based generator: the n-th output is `mix64(seed + n * GOLDEN_GAMMA)`
//! with the finalizer constants below. Named substreams are derived from a
//! root seed with [`SplitMix64::stream`], so results never depend on the order
//! in which trials are scheduled.
//!
//! The constants and the bounded-integer rule in [`SplitMix64::below`] are part
//! of the split file contract; changing them changes every generated split.

use rand::RngCore;

/// Generator version recorded alongside generated splits.
pub const GENERATOR: &str = "splitmix64-v1";

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_MUL_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_MUL_2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Substream tags. Values are frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Splits = 1,
    Baseline = 2,
    Synthetic = 3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Independent stream for `(seed, tag, index)`.
    pub fn stream(seed: u64, tag: Stream, index: u64) -> Self {
        let inner = mix64((tag as u64).wrapping_mul(GOLDEN_GAMMA) ^ mix64(index.wrapping_add(GOLDEN_GAMMA)));
        SplitMix64::new(mix64(seed ^ inner))
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform integer in `0..n` by rejection: words at or above the largest
    /// multiple of `n` are discarded, the rest reduced modulo `n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let r = self.next_word();
            if r < zone {
                return r % n;
            }
        }
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `count` distinct values from `0..n`, uniformly without replacement
    /// (partial Fisher-Yates), returned in draw order.
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
