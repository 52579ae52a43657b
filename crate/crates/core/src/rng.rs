//! Deterministic splittable random-number streams.
//!
//! Every stream is identified by a `(master_seed, stream_index)` pair and is
//! counter-based: draw `i` is a pure function of `(master_seed, stream_index,
//! i)`, so streams can be created in any order and consumed in parallel
//! without coordination. The generator is the SplitMix64 sequence started at
//! a per-stream scrambled offset; the Gaussian sampler is Box–Muller, so
//! cross-language ports can reproduce the distributions (bitwise equality
//! across languages is not required).

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const STREAM_SALT: u64 = 0x5851_f42d_4c95_7f2d;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One deterministic random stream. Single-owner mutable state: the only
/// mutation is the draw counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    counter: u64,
    key: u64,
}

/// Create the stream addressed by `(master_seed, stream_index)`.
pub fn derive_stream(master_seed: u64, stream_index: u64) -> RngStream {
    let key = mix(master_seed.wrapping_add(GOLDEN))
        ^ mix(stream_index.wrapping_mul(GOLDEN).wrapping_add(STREAM_SALT));
    RngStream {
        master_seed,
        stream_index,
        counter: 0,
        key,
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Serializable position: `(master_seed, stream_index, counter)`.
    pub fn state(&self) -> (u64, u64, u64) {
        (self.master_seed, self.stream_index, self.counter)
    }

    /// Rebuild a stream at a saved position; continues the identical sequence.
    pub fn restore(master_seed: u64, stream_index: u64, counter: u64) -> RngStream {
        let mut s = derive_stream(master_seed, stream_index);
        s.counter = counter;
        s
    }

    /// Child stream addressed by `index`, independent of this stream's
    /// position. Children of distinct parents or distinct indices are
    /// statistically independent.
    pub fn substream(&self, index: u64) -> RngStream {
        let child_master = mix(self.master_seed ^ mix(self.stream_index.wrapping_add(GOLDEN)));
        derive_stream(child_master, index)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(c.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Unbiased uniform integer in [0, n). Rejection sampling; the loop
    /// terminates after one iteration almost surely for any n << 2^64.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_usize requires n > 0");
        let n64 = n as u64;
        let limit = u64::MAX - u64::MAX % n64;
        loop {
            let x = self.next_u64();
            if x < limit {
                return (x % n64) as usize;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_usize(i + 1);
            items.swap(i, j);
        }
    }
}

/// One draw from Normal(mean, std²) via Box–Muller. `std = 0` returns `mean`
/// exactly. Always consumes exactly two uniforms, so the stream position
/// advances identically regardless of the parameters.
pub fn gauss(rng: &mut RngStream, mean: f64, std: f64) -> Result<f64> {
    if !(std >= 0.0) {
        return Err(Error::invalid_argument(format!(
            "gauss requires std >= 0, got {std}"
        )));
    }
    let u1 = rng.next_f64();
    let u2 = rng.next_f64();
    // 1 - u1 lies in (0, 1], so the log is finite and z is bounded.
    let r = (-2.0 * (1.0 - u1).ln()).sqrt();
    let z = r * (std::f64::consts::TAU * u2).cos();
    Ok(mean + std * z)
}
