//! Seed derivation and scrambled low-discrepancy sampling.
//!
//! Every stage of a run draws from its own stream, derived from the master
//! seed, the iteration, and a stage tag. This is what makes checkpoint
//! resume reproduce an uninterrupted run exactly: a stage's stream depends
//! only on those three values, never on how many draws other stages made.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stages with independent random streams within one optimizer run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    GpFit,
    Acquisition,
    WeakToStrong,
    Evaluation,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Init => 0x11,
            Stage::GpFit => 0x22,
            Stage::Acquisition => 0x33,
            Stage::WeakToStrong => 0x44,
            Stage::Evaluation => 0x55,
        }
    }
}

/// SplitMix64 finalizer; decorrelates structured seed inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for `(iteration, stage, index)` from a master seed.
pub fn derive_seed(master: u64, iteration: u64, stage: Stage, index: u64) -> u64 {
    let mut s = mix(master);
    s = mix(s ^ iteration.wrapping_mul(0xA076_1D64_78BD_642F));
    s = mix(s ^ stage.tag().wrapping_mul(0xE703_7ED1_A0B4_28DB));
    mix(s ^ index)
}

/// Folds arbitrary seed components into one stream seed.
pub fn mix_seeds(parts: &[u64]) -> u64 {
    let mut s = 0x243F_6A88_85A3_08D3; // arbitrary nonzero start
    for p in parts {
        s = mix(s ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    s
}

/// A fresh ChaCha stream for `(iteration, stage)`.
pub fn stage_rng(master: u64, iteration: u64, stage: Stage) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, iteration, stage, 0))
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical-inverse (van der Corput) value of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= b;
    }
    out
}

/// Scrambled Halton sequence over `[0,1]^d`: one radical-inverse sequence
/// per dimension with a seeded Cranley-Patterson rotation, so points are
/// well spread yet differ per seed.
pub struct ScrambledHalton {
    shifts: Vec<f64>,
    index: u64,
}

impl ScrambledHalton {
    /// Supports up to 16 dimensions (8 source models).
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..dims).map(|_| rng.random::<f64>()).collect();
        Self { shifts, index: 0 }
    }

    /// Next point in the unit cube.
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1; // skip index 0 (the all-zero corner)
        self.shifts
            .iter()
            .enumerate()
            .map(|(j, shift)| {
                let u = radical_inverse(self.index, PRIMES[j]) + shift;
                u - libm::floor(u)
            })
            .collect()
    }

    /// Next point mapped to `[lower, upper]^d`.
    pub fn next_in_bounds(&mut self, lower: f64, upper: f64) -> Vec<f64> {
        self.next_point()
            .into_iter()
            .map(|u| lower + u * (upper - lower))
            .collect()
    }
}
