//! Deterministic random source: ChaCha20 keyed by the seed, one stream per `(L, trial, input)`.
//!
//! The key is the seed as 8 little-endian bytes followed by 24 zero bytes, the nonce is the
//! stream id, and words are read little-endian. With seed 0 and stream 0 the first `u64` is
//! `0x903df1a0ade0b876`, the first keystream word of the all-zero-key ChaCha20 test vector.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Debug)]
pub struct SeedStream {
    rng: ChaCha20Rng,
    spare_normal: Option<f64>,
}

/// Stream id for input `input` of trial `trial` at resolution `L`.
pub fn stream_id(log_resolution: u32, trial: u64, input: u32) -> u64 {
    ((log_resolution as u64) << 56) | ((trial & 0xff_ffff_ffff_ff) << 8) | (input as u64 & 0xff)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        Self { rng, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        // Lemire's widening multiply, with rejection for exact uniformity
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via Box-Muller; the second value of each pair is kept for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * a.sin());
        r * a.cos()
    }
}
