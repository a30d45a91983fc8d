//! Splittable, label-addressed random streams.
//!
//! A stream is identified by a master seed and a `(episode, step, branch)` label. The four
//! words are folded through a 64-bit avalanche mix into a ChaCha8 seed, so any stream can be
//! reconstructed independently of the order in which other streams were consumed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stable 64-bit hash of a string label (first eight bytes of its SHA-256).
pub fn hash_label(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamLabel {
    pub episode: u64,
    pub step: u64,
    pub branch: u64,
}

/// Reserved branch labels for streams that are not per-candidate.
pub mod lanes {
    /// Episode-level draws (initial state, episode competence).
    pub const EPISODE: u64 = u64::MAX;
    /// Environment transition noise.
    pub const TRANSITION: u64 = u64::MAX - 1;
    /// Analysis-time draws such as fold assignment.
    pub const ANALYSIS: u64 = u64::MAX - 2;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: StreamLabel,
    rng: ChaCha8Rng,
}

/// Derives the stream for `(master_seed, episode, step, branch)`. Pure.
pub fn derive_stream(master_seed: u64, episode: u64, step: u64, branch: u64) -> RngStream {
    let mut h = mix64(master_seed ^ GOLDEN);
    for word in [episode, step, branch] {
        h = mix64(h.wrapping_add(GOLDEN) ^ mix64(word));
    }
    RngStream {
        seed: h,
        label: StreamLabel { episode, step, branch },
        rng: ChaCha8Rng::seed_from_u64(h),
    }
}

impl RngStream {
    /// The derived 64-bit seed backing this stream.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Gaussian draw with the given standard deviation; `std == 0` consumes no entropy.
    pub fn normal(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            0.0
        } else {
            std * self.standard_normal()
        }
    }

    /// Uniform draw on `[lo, hi)`; returns `lo` without consuming entropy when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            self.rng.random_range(lo..hi)
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
