//! The optimize loop: initialization, iterate (fit surrogates, generate a
//! batch, evaluate, update), final selection, and the checkpoint record
//! format.
//!
//! A run is a deterministic function of `(RunConfig, evaluator, master
//! seed)`: every stage draws from a stream derived from `(master seed,
//! iteration, stage)`, so resuming from a checkpoint after any completed
//! batch continues exactly where the interrupted run would have gone.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::acquisition::{
    fisher_select, generate_new_configurations, propose_candidates, select_elites,
    weak_to_strong_adjust, AcquisitionSettings,
};
use crate::error::{Error, Result};
use crate::harness::Evaluator;
use crate::merge::{MergeConfig, CONFIG_LOWER, CONFIG_UPPER};
use crate::moo::{canonicalize, EvaluationRecord, Objective, ParetoArchive};
use crate::sampling::{derive_seed, stage_rng, ScrambledHalton, Stage};
use crate::surrogate::{fit_gp, GpModel};

const fn default_n_init() -> usize {
    10
}
const fn default_k_iters() -> usize {
    4
}
const fn default_batch() -> usize {
    5
}
const fn default_n_mc() -> usize {
    512
}
const fn default_true() -> bool {
    true
}
const fn default_bounds() -> (f64, f64) {
    (CONFIG_LOWER, CONFIG_UPPER)
}

/// Full specification of one optimizer run. With the defaults the total
/// budget is `10 + 4 * 5 = 30` evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_k_iters")]
    pub k_iters: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub n_models: usize,
    pub objective_spec: Vec<Objective>,
    #[serde(default = "default_true")]
    pub sparsity_enabled: bool,
    #[serde(default = "default_true")]
    pub w2s_enabled: bool,
    #[serde(default = "default_true")]
    pub fisher_enabled: bool,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    pub master_seed: u64,
    #[serde(default = "default_bounds")]
    pub bounds: (f64, f64),
}

impl RunConfig {
    /// Defaults for a run against the given evaluator surface.
    pub fn new(n_models: usize, objective_spec: Vec<Objective>, master_seed: u64) -> Self {
        let sparsity_enabled = objective_spec.iter().any(|o| o.name == "sparsity");
        Self {
            n_init: default_n_init(),
            k_iters: default_k_iters(),
            batch: default_batch(),
            n_models,
            objective_spec,
            sparsity_enabled,
            w2s_enabled: true,
            fisher_enabled: true,
            n_mc: default_n_mc(),
            master_seed,
            bounds: default_bounds(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_models
    }

    pub fn budget(&self) -> usize {
        self.n_init + self.k_iters * self.batch
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::Argument("n_init must be at least 2".into()));
        }
        if self.batch == 0 {
            return Err(Error::Argument("batch size must be at least 1".into()));
        }
        if self.n_models == 0 {
            return Err(Error::Argument("need at least one source model".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Argument("n_mc must be at least 1".into()));
        }
        let m = self.objective_spec.len();
        if !(2..=4).contains(&m) {
            return Err(Error::Argument(format!(
                "{m} objectives unsupported: exact hypervolume needs 2 to 4"
            )));
        }
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo >= hi || hi > 1.0 {
            return Err(Error::Argument(format!("bad bounds ({lo}, {hi})")));
        }
        Ok(())
    }

    fn acquisition_settings(&self) -> AcquisitionSettings {
        AcquisitionSettings {
            n_mc: self.n_mc,
            bounds: self.bounds,
            sparsity_index: self.objective_spec.iter().position(|o| o.name == "sparsity"),
            ..Default::default()
        }
    }
}

/// Where a finished (or resumed) run stands.
#[derive(Debug, Clone)]
pub struct RunState {
    pub archive: ParetoArchive,
    /// Completed iterations (0 = only the initial batch).
    pub iteration: u32,
    pub evaluations_used: usize,
    pub master_seed: u64,
}

/// Receives encoded checkpoint lines after every completed batch.
pub trait CheckpointSink {
    fn append_batch(&mut self, lines: &[String]) -> Result<()>;
}

/// In-memory sink; the CLI provides the file-backed one.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub lines: Vec<String>,
}

impl CheckpointSink for MemorySink {
    fn append_batch(&mut self, lines: &[String]) -> Result<()> {
        self.lines.extend_from_slice(lines);
        Ok(())
    }
}

/// Discards checkpoints.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl CheckpointSink for NullSink {
    fn append_batch(&mut self, _lines: &[String]) -> Result<()> {
        Ok(())
    }
}

/// One checkpoint line per record:
/// `{"id":..,"iteration":..,"config":{"weights":[..],"densities":[..]},"raw":[..],"canonical":[..],"seed":..}`
pub fn encode_record(record: &EvaluationRecord) -> String {
    serde_json::to_string(record).expect("record serialization is infallible")
}

/// Decodes one checkpoint line; `line_number` is 1-based and reported in
/// the error.
pub fn decode_record(line: &str, line_number: usize) -> Result<EvaluationRecord> {
    serde_json::from_str(line).map_err(|e| Error::Checkpoint {
        line: line_number,
        message: format!("{e}"),
    })
}

/// The initial configurations: a scrambled low-discrepancy sequence over the
/// bounds, deterministic per master seed.
pub fn initialize(rc: &RunConfig) -> Result<Vec<MergeConfig>> {
    rc.validate()?;
    let mut seq = ScrambledHalton::new(rc.dim(), derive_seed(rc.master_seed, 0, Stage::Init, 0));
    (0..rc.n_init)
        .map(|_| MergeConfig::from_flat(&seq.next_in_bounds(rc.bounds.0, rc.bounds.1)))
        .collect()
}

/// Runs the full optimization: evaluate the initial batch, then `k_iters`
/// rounds of fit-propose-evaluate-update. Exactly
/// `n_init + k_iters * batch` evaluator calls; a checkpoint batch is
/// appended to `sink` after every completed batch.
pub fn optimize<E, S>(rc: &RunConfig, evaluator: &E, sink: &mut S) -> Result<RunState>
where
    E: Evaluator + ?Sized,
    S: CheckpointSink + ?Sized,
{
    let mut generator = AcquisitionGenerator { rc };
    run_loop(rc, evaluator, sink, Vec::new(), &mut generator)
}

/// Continues a run from previously checkpointed records. The records must
/// form whole batches produced by the same `(rc, evaluator)`; the
/// continuation is identical to the uninterrupted run.
pub fn resume<E, S>(
    rc: &RunConfig,
    evaluator: &E,
    sink: &mut S,
    existing: Vec<EvaluationRecord>,
) -> Result<RunState>
where
    E: Evaluator + ?Sized,
    S: CheckpointSink + ?Sized,
{
    let mut generator = AcquisitionGenerator { rc };
    run_loop(rc, evaluator, sink, existing, &mut generator)
}

/// Batch generator contract shared by the optimizer and the baselines: the
/// run loop asks for the initial configs (`iteration == 0`, no archive) and
/// then one batch per iteration.
pub(crate) trait BatchGenerator {
    fn generate(&mut self, iteration: u32, archive: Option<&ParetoArchive>)
        -> Result<Vec<MergeConfig>>;
}

struct AcquisitionGenerator<'a> {
    rc: &'a RunConfig,
}

impl BatchGenerator for AcquisitionGenerator<'_> {
    fn generate(
        &mut self,
        iteration: u32,
        archive: Option<&ParetoArchive>,
    ) -> Result<Vec<MergeConfig>> {
        let rc = self.rc;
        if iteration == 0 {
            return initialize(rc);
        }
        let archive = archive.expect("archive exists after the initial batch");
        let gps = fit_objective_gps(rc, archive)?;
        let settings = rc.acquisition_settings();
        let k = iteration as u64;
        let mut acq_rng = stage_rng(rc.master_seed, k, Stage::Acquisition);
        let mut w2s_rng = stage_rng(rc.master_seed, k, Stage::WeakToStrong);
        let batch = match (rc.w2s_enabled, rc.fisher_enabled) {
            (true, true) => generate_new_configurations(
                &gps,
                archive,
                rc.batch,
                &settings,
                &mut acq_rng,
                &mut w2s_rng,
            )?,
            (true, false) => {
                let proposed =
                    propose_candidates(&gps, archive, rc.batch, &settings, &mut acq_rng)?;
                let elites = select_elites(archive, settings.elite_count, settings.sparsity_index);
                weak_to_strong_adjust(&proposed, &elites, settings.de_scale, &mut w2s_rng)?
            }
            (false, true) => {
                let proposed =
                    propose_candidates(&gps, archive, 2 * rc.batch, &settings, &mut acq_rng)?;
                fisher_select(&proposed, &gps, rc.batch, settings.bounds)?
            }
            (false, false) => {
                propose_candidates(&gps, archive, rc.batch, &settings, &mut acq_rng)?
            }
        };
        Ok(batch.configs)
    }
}

/// Per-objective GPs over all evaluated records (inputs scaled to the unit
/// cube, canonical targets).
pub fn fit_objective_gps(rc: &RunConfig, archive: &ParetoArchive) -> Result<Vec<GpModel>> {
    let records = archive.records();
    let (lo, hi) = rc.bounds;
    let inputs: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.config.to_flat().iter().map(|v| (v - lo) / (hi - lo)).collect())
        .collect();
    let iteration = records.last().map_or(0, |r| r.iteration as u64) + 1;
    (0..rc.objective_spec.len())
        .map(|j| {
            let y: Vec<f64> = records.iter().map(|r| r.canonical[j]).collect();
            fit_gp(&inputs, &y, derive_seed(rc.master_seed, iteration, Stage::GpFit, j as u64))
        })
        .collect()
}

pub(crate) fn run_loop<E, S>(
    rc: &RunConfig,
    evaluator: &E,
    sink: &mut S,
    existing: Vec<EvaluationRecord>,
    generator: &mut dyn BatchGenerator,
) -> Result<RunState>
where
    E: Evaluator + ?Sized,
    S: CheckpointSink + ?Sized,
{
    rc.validate()?;
    if evaluator.objective_spec() != rc.objective_spec.as_slice() {
        return Err(Error::Argument(
            "run config and evaluator disagree on the objective list".into(),
        ));
    }
    if evaluator.n_models() != rc.n_models {
        return Err(Error::Argument(format!(
            "run config for {} models, evaluator expects {}",
            rc.n_models,
            evaluator.n_models()
        )));
    }

    let mut archive: Option<ParetoArchive> = None;
    let mut next_id: u64 = 0;
    let mut start_iter: u32 = 0;
    if !existing.is_empty() {
        let completed = validate_resume_records(rc, &existing)?;
        next_id = existing.len() as u64;
        start_iter = completed;
        // Replay batch by batch so the reference-point clamp sequence is
        // identical to the uninterrupted run.
        let mut replay = existing.into_iter();
        let mut arch = ParetoArchive::from_records(replay.by_ref().take(rc.n_init).collect())?;
        loop {
            let batch: Vec<EvaluationRecord> = replay.by_ref().take(rc.batch).collect();
            if batch.is_empty() {
                break;
            }
            arch.push_batch(batch)?;
        }
        archive = Some(arch);
    }

    for k in start_iter..=(rc.k_iters as u32) {
        let configs = generator.generate(k, archive.as_ref())?;
        let expected = if k == 0 { rc.n_init } else { rc.batch };
        if configs.len() != expected {
            return Err(Error::Numerical(format!(
                "generator produced {} configs for iteration {k}, expected {expected}",
                configs.len()
            )));
        }
        let records = evaluate_batch(rc, evaluator, configs, k, &mut next_id)?;
        let lines: Vec<String> = records.iter().map(encode_record).collect();
        match archive.as_mut() {
            Some(a) => a.push_batch(records)?,
            None => archive = Some(ParetoArchive::from_records(records)?),
        }
        sink.append_batch(&lines)?;
    }

    let archive = archive.expect("at least the initial batch ran");
    Ok(RunState {
        evaluations_used: archive.records().len(),
        iteration: rc.k_iters as u32,
        master_seed: rc.master_seed,
        archive,
    })
}

/// Checks resumed records form whole batches with sequential ids and
/// consistent shapes; returns the next iteration to run.
fn validate_resume_records(rc: &RunConfig, records: &[EvaluationRecord]) -> Result<u32> {
    let n = records.len();
    if n < rc.n_init || !(n - rc.n_init).is_multiple_of(rc.batch) {
        return Err(Error::Argument(format!(
            "{n} checkpointed records do not form whole batches (n_init {}, batch {})",
            rc.n_init, rc.batch
        )));
    }
    let completed_batches = (n - rc.n_init) / rc.batch;
    if completed_batches > rc.k_iters {
        return Err(Error::Argument(format!(
            "checkpoint contains {completed_batches} iterations, run config allows {}",
            rc.k_iters
        )));
    }
    for (i, r) in records.iter().enumerate() {
        if r.id != i as u64 {
            return Err(Error::Checkpoint {
                line: i + 1,
                message: format!("record id {} out of sequence (expected {i})", r.id),
            });
        }
        let expected_iter =
            if i < rc.n_init { 0 } else { 1 + ((i - rc.n_init) / rc.batch) as u32 };
        if r.iteration != expected_iter {
            return Err(Error::Checkpoint {
                line: i + 1,
                message: format!(
                    "record {} belongs to iteration {}, expected {expected_iter}",
                    r.id, r.iteration
                ),
            });
        }
        if r.config.n_models() != rc.n_models {
            return Err(Error::Checkpoint {
                line: i + 1,
                message: format!("record {} has a config of wrong dimension", r.id),
            });
        }
        let canonical = canonicalize(&r.raw, &rc.objective_spec)?;
        if canonical != r.canonical {
            return Err(Error::Checkpoint {
                line: i + 1,
                message: format!(
                    "record {} canonical values disagree with its raw values",
                    r.id
                ),
            });
        }
    }
    Ok(completed_batches as u32 + 1)
}

/// Evaluates one batch. Per-record seeds come from the iteration's
/// evaluation stream. Any single failure discards the whole batch.
pub(crate) fn evaluate_batch<E>(
    rc: &RunConfig,
    evaluator: &E,
    configs: Vec<MergeConfig>,
    iteration: u32,
    next_id: &mut u64,
) -> Result<Vec<EvaluationRecord>>
where
    E: Evaluator + ?Sized,
{
    use rand::RngCore;
    let mut seed_rng = stage_rng(rc.master_seed, iteration as u64, Stage::Evaluation);
    let jobs: Vec<(MergeConfig, u64)> =
        configs.into_iter().map(|c| (c, seed_rng.next_u64())).collect();
    let outputs = evaluator.evaluate_batch(&jobs);
    let mut records = Vec::with_capacity(jobs.len());
    for ((config, seed), output) in jobs.into_iter().zip(outputs) {
        let raw = output?;
        if raw.len() != rc.objective_spec.len() {
            return Err(Error::Evaluation(format!(
                "evaluator returned {} objectives, expected {}",
                raw.len(),
                rc.objective_spec.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("evaluator returned a non-finite value".into()));
        }
        let canonical = canonicalize(&raw, &rc.objective_spec)?;
        records.push(EvaluationRecord {
            id: *next_id,
            iteration,
            config,
            raw,
            canonical,
            seed,
        });
        *next_id += 1;
    }
    Ok(records)
}

/// Final selection from the archive front: maximize the mean of
/// min-max-normalized task objectives (every objective not named
/// `sparsity`), ties broken by lowest sparsity, then lowest id.
pub fn final_select(
    archive: &ParetoArchive,
    objective_spec: &[Objective],
) -> Result<EvaluationRecord> {
    let front: Vec<&EvaluationRecord> = archive.front_records().collect();
    let first = front
        .first()
        .ok_or_else(|| Error::Argument("final selection from an empty archive".into()))?;
    if front.len() == 1 {
        return Ok((*first).clone());
    }
    let task_idx: Vec<usize> = objective_spec
        .iter()
        .enumerate()
        .filter(|(_, o)| o.name != "sparsity")
        .map(|(j, _)| j)
        .collect();
    let sparsity_idx = objective_spec.iter().position(|o| o.name == "sparsity");

    // Per task objective, orient raw values so higher is better, then
    // min-max normalize across the front.
    let mut normalized = alloc::vec![alloc::vec![0.5f64; task_idx.len()]; front.len()];
    for (t, &j) in task_idx.iter().enumerate() {
        let oriented: Vec<f64> = front
            .iter()
            .map(|r| match objective_spec[j].orientation {
                crate::moo::Orientation::Maximize => r.raw[j],
                crate::moo::Orientation::Minimize => -r.raw[j],
            })
            .collect();
        let lo = oriented.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = oriented.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-12 {
            for (i, v) in oriented.iter().enumerate() {
                normalized[i][t] = (v - lo) / (hi - lo);
            }
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, r) in front.iter().enumerate() {
        let score = if task_idx.is_empty() {
            0.0
        } else {
            normalized[i].iter().sum::<f64>() / task_idx.len() as f64
        };
        let better = match best {
            None => true,
            Some((bi, bs)) => {
                if score != bs {
                    score > bs
                } else {
                    let br = front[bi];
                    match sparsity_idx {
                        Some(s) if r.raw[s] != br.raw[s] => r.raw[s] < br.raw[s],
                        _ => r.id < br.id,
                    }
                }
            }
        };
        if better {
            best = Some((i, score));
        }
    }
    Ok(front[best.expect("nonempty front").0].clone())
}
