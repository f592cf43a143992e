//! Multi-objective search for model-merging configurations.
//!
//! This crate implements the full optimization stack for finding per-model
//! (weight, density) merge configurations over a DARE+TIES merging substrate:
//!
//! - [`params`]: flat f32 tensor archives, delta-parameter arithmetic, and the
//!   L1 sparsity metric, plus the binary archive wire format.
//! - [`merge`]: linear / task-arithmetic / DARE / TIES merge operators and the
//!   combined DARE+TIES substrate the optimizer searches over.
//! - [`moo`]: Pareto dominance, nondominated fronts, exact hypervolume, and
//!   the evaluation archive.
//! - [`surrogate`]: per-objective Gaussian-process regression with
//!   marginal-likelihood fitting and Fisher-information scoring.
//! - [`acquisition`]: Monte-Carlo expected-hypervolume-improvement candidate
//!   generation with weak-to-strong adjustment and Fisher-based selection.
//! - [`engine`]: the batched optimize loop, final selection, and the
//!   checkpoint record format.
//! - [`harness`]: toy task suites with genuinely fine-tuned source models,
//!   analytic benchmark objectives, and baseline searchers.
//!
//! The crate is `no_std` (with `alloc`); all randomness is explicitly seeded
//! and file I/O lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod acquisition;
pub mod engine;
pub mod error;
pub mod harness;
pub mod math;
pub mod merge;
pub mod moo;
pub mod params;
pub mod sampling;
pub mod surrogate;

pub use error::{Error, Result};
pub use merge::MergeConfig;
pub use moo::{EvaluationRecord, ParetoArchive};
pub use params::{ParameterDelta, TensorArchive};
