//! Desk-scale evaluation harness: toy task suites whose source models are
//! genuinely fine-tuned from a shared base, analytic benchmark objectives
//! for optimizer validation, and baseline searchers (random, grid,
//! single-objective BO).

mod mlp;

pub use mlp::{gaussian_cluster_dataset, score_archive, TaskDataset, INPUT_DIM};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    initialize, run_loop, BatchGenerator, CheckpointSink, RunConfig, RunState,
};
use crate::error::{Error, Result};
use crate::math;
use crate::merge::{dare_ties_merge, MergeConfig};
use crate::moo::{Objective, ParetoArchive};
use crate::params::{compute_delta, sparsity_metric, ParameterDelta, TensorArchive};
use crate::sampling::{mix_seeds, stage_rng, ScrambledHalton, Stage};
use crate::surrogate::{fit_gp, GpModel};

/// An objective evaluator: deterministic per `(config, seed)` and safe to
/// invoke concurrently. `evaluate_batch` exists so a std wrapper can fan a
/// batch out over threads; the default runs sequentially.
pub trait Evaluator: Sync {
    fn objective_spec(&self) -> &[Objective];
    fn n_models(&self) -> usize;
    fn evaluate(&self, config: &MergeConfig, seed: u64) -> Result<Vec<f64>>;

    fn evaluate_batch(&self, jobs: &[(MergeConfig, u64)]) -> Vec<Result<Vec<f64>>> {
        jobs.iter().map(|(c, s)| self.evaluate(c, *s)).collect()
    }
}

const N_PER_CLASS: usize = 128;
const TASK_SEPARATION: f32 = 2.0;
const TASK_NOISE: f32 = 1.0;
const BASE_SEPARATION: f32 = 0.4;
const BASE_EPOCHS: usize = 150;
const FINE_TUNE_EPOCHS: usize = 400;
const LEARNING_RATE: f64 = 0.5;
const OWN_TASK_FLOOR: f64 = 0.9;
const MAX_GENERATION_ATTEMPTS: u64 = 8;

/// A reproducible toy suite: a small MLP base, one 2-class Gaussian-cluster
/// dataset per task, and one source model per task fine-tuned from the base
/// on its own dataset. Each source model scores at least 0.9 on its own task
/// and strictly lower everywhere it was not tuned.
#[derive(Debug, Clone)]
pub struct ToyTaskSuite {
    pub base: TensorArchive,
    pub source_models: Vec<TensorArchive>,
    pub datasets: Vec<TaskDataset>,
    /// Seed of each task's dataset (persisted in the suite manifest).
    pub task_seeds: Vec<u64>,
    pub base_task_seed: u64,
    pub suite_seed: u64,
    /// `scores[m][t]` = accuracy of source model `m` on task `t`.
    pub scores: Vec<Vec<f64>>,
}

impl ToyTaskSuite {
    pub fn n_tasks(&self) -> usize {
        self.source_models.len()
    }

    /// Task objective names plus the sparsity objective when enabled.
    pub fn objective_spec(&self, sparsity_enabled: bool) -> Vec<Objective> {
        let mut spec: Vec<Objective> = (1..=self.n_tasks())
            .map(|t| Objective::maximize(&format!("task{t}")))
            .collect();
        if sparsity_enabled {
            spec.push(Objective::minimize("sparsity"));
        }
        spec
    }

    /// Rebuilds a suite from persisted archives and the manifest seeds;
    /// datasets and the score table are regenerated deterministically.
    pub fn from_parts(
        base: TensorArchive,
        source_models: Vec<TensorArchive>,
        task_seeds: Vec<u64>,
        base_task_seed: u64,
        suite_seed: u64,
    ) -> Result<Self> {
        if source_models.len() != task_seeds.len() {
            return Err(Error::Argument(format!(
                "{} source models vs {} task seeds",
                source_models.len(),
                task_seeds.len()
            )));
        }
        for m in &source_models {
            base.check_same_structure(m)?;
        }
        let datasets: Vec<TaskDataset> = task_seeds
            .iter()
            .enumerate()
            .map(|(t, &seed)| task_dataset(t, seed))
            .collect();
        let scores = score_table(&source_models, &datasets)?;
        Ok(Self {
            base,
            source_models,
            datasets,
            task_seeds,
            base_task_seed,
            suite_seed,
            scores,
        })
    }
}

/// Class centers for task `t`: classes separate along a task-specific trio
/// of input dimensions. Neighboring tasks share one dimension with opposite
/// orientation, so their fine-tuned deltas genuinely conflict and the merge
/// configuration matters.
fn task_centers(task: usize) -> ([f32; INPUT_DIM], [f32; INPUT_DIM]) {
    let mut c0 = [0.0f32; INPUT_DIM];
    let (a, b, shared) = (
        2 * task % INPUT_DIM,
        (2 * task + 1) % INPUT_DIM,
        (2 * task + 2) % INPUT_DIM,
    );
    c0[a] = TASK_SEPARATION;
    c0[b] = TASK_SEPARATION;
    c0[shared] = -TASK_SEPARATION;
    let c1 = c0.map(|v| -v);
    (c0, c1)
}

fn task_dataset(task: usize, seed: u64) -> TaskDataset {
    let (c0, c1) = task_centers(task);
    gaussian_cluster_dataset(&c0, &c1, N_PER_CLASS, TASK_NOISE, seed)
}

/// The base model's generic warm-up task: weak separation along every axis.
fn base_dataset(seed: u64) -> TaskDataset {
    let c0 = [BASE_SEPARATION; INPUT_DIM];
    let c1 = [-BASE_SEPARATION; INPUT_DIM];
    gaussian_cluster_dataset(&c0, &c1, N_PER_CLASS, TASK_NOISE, seed)
}

fn score_table(models: &[TensorArchive], datasets: &[TaskDataset]) -> Result<Vec<Vec<f64>>> {
    models
        .iter()
        .map(|m| datasets.iter().map(|d| score_archive(m, d)).collect())
        .collect()
}

/// Generates a toy suite: train the base briefly on a shared task, then
/// fine-tune one source model per task. Regenerates at fixed retry seeds
/// until every source model clears the 0.9 own-task floor and is strictly
/// specialized; errors with re-seed advice after eight attempts.
pub fn gen_toy_suite(n_tasks: usize, seed: u64) -> Result<ToyTaskSuite> {
    if !(2..=4).contains(&n_tasks) {
        return Err(Error::Argument(format!("n_tasks {n_tasks} outside [2, 4]")));
    }
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let attempt_seed = mix_seeds(&[seed, attempt]);
        let base_task_seed = mix_seeds(&[attempt_seed, 1]);
        let init_seed = mix_seeds(&[attempt_seed, 2]);
        let task_seeds: Vec<u64> =
            (0..n_tasks).map(|t| mix_seeds(&[attempt_seed, 3 + t as u64])).collect();

        let datasets: Vec<TaskDataset> = task_seeds
            .iter()
            .enumerate()
            .map(|(t, &s)| task_dataset(t, s))
            .collect();

        let mut base = mlp::MlpParams::init(init_seed);
        base.train(&base_dataset(base_task_seed), BASE_EPOCHS, LEARNING_RATE);
        let base_archive = base.to_archive();

        let source_models: Vec<TensorArchive> = datasets
            .iter()
            .map(|d| {
                let mut m = mlp::MlpParams::from_archive(&base_archive)
                    .expect("base archive has the fixed layout");
                m.train(d, FINE_TUNE_EPOCHS, LEARNING_RATE);
                m.to_archive()
            })
            .collect();

        let scores = score_table(&source_models, &datasets)?;
        if suite_is_specialized(&scores) {
            return Ok(ToyTaskSuite {
                base: base_archive,
                source_models,
                datasets,
                task_seeds,
                base_task_seed,
                suite_seed: seed,
                scores,
            });
        }
    }
    Err(Error::Evaluation(format!(
        "suite generation failed the specialization checks after \
         {MAX_GENERATION_ATTEMPTS} attempts; try a different seed"
    )))
}

/// Own-task score at least 0.9; every model strictly better on its own task
/// than on any other; every model strictly better on its own task than any
/// other model is there.
fn suite_is_specialized(scores: &[Vec<f64>]) -> bool {
    let n = scores.len();
    for m in 0..n {
        if scores[m][m] < OWN_TASK_FLOOR {
            return false;
        }
        for t in 0..n {
            if t != m && scores[m][m] <= scores[m][t] {
                return false;
            }
        }
        for other in 0..n {
            if other != m && scores[m][m] <= scores[other][m] {
                return false;
            }
        }
    }
    true
}

/// Evaluator over a toy suite: merge with the configured weights/densities
/// under the given seed, score every task (maximize), and append the
/// sparsity metric (minimize) when enabled.
pub struct MergeEvaluator {
    base: TensorArchive,
    deltas: Vec<ParameterDelta>,
    datasets: Vec<TaskDataset>,
    spec: Vec<Objective>,
}

pub fn merge_evaluator(suite: &ToyTaskSuite, sparsity_enabled: bool) -> Result<MergeEvaluator> {
    let deltas: Result<Vec<ParameterDelta>> = suite
        .source_models
        .iter()
        .map(|m| compute_delta(m, &suite.base))
        .collect();
    Ok(MergeEvaluator {
        base: suite.base.clone(),
        deltas: deltas?,
        datasets: suite.datasets.clone(),
        spec: suite.objective_spec(sparsity_enabled),
    })
}

impl MergeEvaluator {
    fn sparsity_enabled(&self) -> bool {
        self.spec.len() > self.datasets.len()
    }
}

impl Evaluator for MergeEvaluator {
    fn objective_spec(&self) -> &[Objective] {
        &self.spec
    }

    fn n_models(&self) -> usize {
        self.deltas.len()
    }

    fn evaluate(&self, config: &MergeConfig, seed: u64) -> Result<Vec<f64>> {
        if config.n_models() != self.deltas.len() {
            return Err(Error::Argument(format!(
                "config for {} models, suite has {}",
                config.n_models(),
                self.deltas.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let merged = dare_ties_merge(&self.base, &self.deltas, config, &mut rng)?;
        let mut raw = Vec::with_capacity(self.spec.len());
        for dataset in &self.datasets {
            raw.push(score_archive(&merged, dataset)?);
        }
        if self.sparsity_enabled() {
            raw.push(sparsity_metric(&merged, &self.base)?);
        }
        Ok(raw)
    }
}

/// Analytic biobjective test functions over the flat config vector, both
/// minimized, with known Pareto fronts. Inputs are rescaled from the config
/// bounds to the unit cube, so the fronts have their textbook form.
pub struct BenchmarkEvaluator {
    kind: BenchmarkFn,
    n_models: usize,
    spec: Vec<Objective>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkFn {
    /// `f1 = u1`, `f2 = g (1 - sqrt(f1 / g))` with `g = 1 + 9 mean(u_2..d)`;
    /// the front is `f2 = 1 - sqrt(f1)` at `u_2..d = 0`.
    Zdt1Like,
    /// Squared distances to two centers (0.25... and 0.75...); the front is
    /// the segment between them.
    SpherePair,
}

pub fn benchmark_evaluator(name: &str, n_models: usize) -> Result<BenchmarkEvaluator> {
    let kind = match name {
        "zdt1-like" => BenchmarkFn::Zdt1Like,
        "sphere-pair" => BenchmarkFn::SpherePair,
        other => {
            return Err(Error::Argument(format!(
                "unknown benchmark {other:?} (expected \"zdt1-like\" or \"sphere-pair\")"
            )))
        }
    };
    if n_models == 0 {
        return Err(Error::Argument("need at least one model dimension".into()));
    }
    Ok(BenchmarkEvaluator {
        kind,
        n_models,
        spec: alloc::vec![Objective::minimize("f1"), Objective::minimize("f2")],
    })
}

impl Evaluator for BenchmarkEvaluator {
    fn objective_spec(&self) -> &[Objective] {
        &self.spec
    }

    fn n_models(&self) -> usize {
        self.n_models
    }

    fn evaluate(&self, config: &MergeConfig, _seed: u64) -> Result<Vec<f64>> {
        let flat = config.to_flat();
        if flat.len() != 2 * self.n_models {
            return Err(Error::Argument(format!(
                "config dimension {} vs expected {}",
                flat.len(),
                2 * self.n_models
            )));
        }
        let (lo, hi) = (crate::merge::CONFIG_LOWER, crate::merge::CONFIG_UPPER);
        let u: Vec<f64> = flat.iter().map(|v| (v - lo) / (hi - lo)).collect();
        Ok(match self.kind {
            BenchmarkFn::Zdt1Like => {
                let d = u.len();
                let f1 = u[0];
                let g = if d > 1 {
                    1.0 + 9.0 * u[1..].iter().sum::<f64>() / (d - 1) as f64
                } else {
                    1.0
                };
                let f2 = g * (1.0 - math::sqrt(f1 / g));
                alloc::vec![f1, f2]
            }
            BenchmarkFn::SpherePair => {
                let f1: f64 = flat.iter().map(|v| (v - 0.25) * (v - 0.25)).sum();
                let f2: f64 = flat.iter().map(|v| (v - 0.75) * (v - 0.75)).sum();
                alloc::vec![f1, f2]
            }
        })
    }
}

struct UniformGenerator<'a> {
    rc: &'a RunConfig,
}

impl BatchGenerator for UniformGenerator<'_> {
    fn generate(
        &mut self,
        iteration: u32,
        _archive: Option<&ParetoArchive>,
    ) -> Result<Vec<MergeConfig>> {
        let rc = self.rc;
        let count = if iteration == 0 { rc.n_init } else { rc.batch };
        let (lo, hi) = rc.bounds;
        let mut rng = stage_rng(rc.master_seed, iteration as u64, Stage::Acquisition);
        (0..count)
            .map(|_| {
                let flat: Vec<f64> =
                    (0..rc.dim()).map(|_| lo + rng.random::<f64>() * (hi - lo)).collect();
                MergeConfig::from_flat(&flat)
            })
            .collect()
    }
}

/// Uniform random search with the same budget, batch structure, and
/// checkpoint format as the optimizer. Deterministic per `seed` (which
/// replaces the run config's master seed).
pub fn random_search<E, S>(
    rc: &RunConfig,
    evaluator: &E,
    sink: &mut S,
    seed: u64,
) -> Result<RunState>
where
    E: Evaluator + ?Sized,
    S: CheckpointSink + ?Sized,
{
    let rc = RunConfig { master_seed: seed, ..rc.clone() };
    let mut generator = UniformGenerator { rc: &rc };
    run_loop(&rc, evaluator, sink, Vec::new(), &mut generator)
}

const GRID_LIMIT: usize = 10_000;

/// Exhaustive grid search over per-model weight and density values: the full
/// Cartesian product (guarded at 10^4 points), every grid point evaluated
/// exactly once.
pub fn grid_search<E, S>(
    evaluator: &E,
    weight_grid: &[f64],
    density_grid: &[f64],
    sink: &mut S,
) -> Result<RunState>
where
    E: Evaluator + ?Sized,
    S: CheckpointSink + ?Sized,
{
    if weight_grid.is_empty() || density_grid.is_empty() {
        return Err(Error::Argument("grids must be nonempty".into()));
    }
    for v in weight_grid.iter().chain(density_grid) {
        if !v.is_finite() || *v <= 0.0 || *v > 1.0 {
            return Err(Error::Argument(format!("grid value {v} outside (0, 1]")));
        }
    }
    let n = evaluator.n_models();
    let mut total: usize = 1;
    for _ in 0..n {
        total = total
            .checked_mul(weight_grid.len())
            .and_then(|t| t.checked_mul(density_grid.len()))
            .ok_or_else(|| Error::Argument("grid size overflow".into()))?;
        if total > GRID_LIMIT {
            return Err(Error::Argument(format!(
                "grid of more than {GRID_LIMIT} points; refine the grids"
            )));
        }
    }

    // Odometer over the canonical flat layout, last dimension fastest.
    let dims = 2 * n;
    let grid_for = |dim: usize| if dim < n { weight_grid } else { density_grid };
    let mut idx = alloc::vec![0usize; dims];
    let mut records = Vec::with_capacity(total);
    let mut done = false;
    let mut id: u64 = 0;
    while !done {
        let flat: Vec<f64> = (0..dims).map(|d| grid_for(d)[idx[d]]).collect();
        let config = MergeConfig::from_flat(&flat)?;
        let seed = mix_seeds(&[0x6772_6964, id]);
        let raw = evaluator.evaluate(&config, seed)?;
        let canonical = crate::moo::canonicalize(&raw, evaluator.objective_spec())?;
        records.push(crate::moo::EvaluationRecord {
            id,
            iteration: 0,
            config,
            raw,
            canonical,
            seed,
        });
        id += 1;
        done = true;
        for d in (0..dims).rev() {
            idx[d] += 1;
            if idx[d] < grid_for(d).len() {
                done = false;
                break;
            }
            idx[d] = 0;
        }
    }
    let lines: Vec<String> = records.iter().map(crate::engine::encode_record).collect();
    sink.append_batch(&lines)?;
    let archive = ParetoArchive::from_records(records)?;
    Ok(RunState {
        evaluations_used: archive.records().len(),
        iteration: 0,
        master_seed: 0,
        archive,
    })
}

/// Expected improvement for a minimized target.
fn expected_improvement(gp: &GpModel, x: &[f64], best: f64) -> Result<f64> {
    let p = gp.posterior(x)?;
    let sigma = math::sqrt(p.variance.max(0.0));
    if sigma < 1e-12 {
        return Ok((best - p.mean).max(0.0));
    }
    let z = (best - p.mean) / sigma;
    Ok((best - p.mean) * math::normal_cdf(z) + sigma * math::normal_pdf(z))
}

struct EiGenerator<'a> {
    rc: &'a RunConfig,
    target: usize,
}

impl BatchGenerator for EiGenerator<'_> {
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
        let records = archive.records();
        let (lo, hi) = rc.bounds;
        let inputs: Vec<Vec<f64>> = records
            .iter()
            .map(|r| r.config.to_flat().iter().map(|v| (v - lo) / (hi - lo)).collect())
            .collect();
        let y: Vec<f64> = records.iter().map(|r| r.canonical[self.target]).collect();
        let gp = fit_gp(
            &inputs,
            &y,
            crate::sampling::derive_seed(rc.master_seed, iteration as u64, Stage::GpFit, 0),
        )?;
        let best = y.iter().cloned().fold(f64::INFINITY, f64::min);

        use rand::RngCore;
        let mut acq_rng = stage_rng(rc.master_seed, iteration as u64, Stage::Acquisition);
        let mut seq = ScrambledHalton::new(rc.dim(), acq_rng.next_u64());
        let scale = |flat: &[f64]| -> Vec<f64> {
            flat.iter().map(|v| (v - lo) / (hi - lo)).collect()
        };
        let pool: Vec<Vec<f64>> = (0..512).map(|_| seq.next_in_bounds(lo, hi)).collect();
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(pool.len());
        for (i, cand) in pool.iter().enumerate() {
            scored.push((expected_improvement(&gp, &scale(cand), best)?, i));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1)));

        let mut refined: Vec<(f64, Vec<f64>)> = Vec::new();
        for &(seed_score, idx) in scored.iter().take(16) {
            let mut cur = pool[idx].clone();
            let mut cur_score = seed_score;
            let mut step = 0.1;
            for _ in 0..20 {
                let mut best_probe: Option<(f64, Vec<f64>)> = None;
                for dim in 0..rc.dim() {
                    for dir in [1.0, -1.0] {
                        let mut probe = cur.clone();
                        probe[dim] = (probe[dim] + dir * step).clamp(lo, hi);
                        if probe[dim] == cur[dim] {
                            continue;
                        }
                        let s = expected_improvement(&gp, &scale(&probe), best)?;
                        if best_probe.as_ref().is_none_or(|(bs, _)| s > *bs) {
                            best_probe = Some((s, probe));
                        }
                    }
                }
                match best_probe {
                    Some((s, probe)) if s > cur_score => {
                        cur = probe;
                        cur_score = s;
                    }
                    _ => step *= 0.5,
                }
            }
            refined.push((cur_score, cur));
        }
        refined.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite"));

        let mut batch: Vec<Vec<f64>> = Vec::with_capacity(rc.batch);
        for (_, c) in &refined {
            if batch.len() == rc.batch {
                break;
            }
            if !batch.contains(c) {
                batch.push(c.clone());
            }
        }
        for &(_, idx) in &scored {
            if batch.len() == rc.batch {
                break;
            }
            if !batch.contains(&pool[idx]) {
                batch.push(pool[idx].clone());
            }
        }
        batch.iter().map(|f| MergeConfig::from_flat(f)).collect()
    }
}

/// Single-objective Bayesian optimization baseline: the optimizer loop with
/// one scalar GP and expected improvement on `objective_spec[target_index]`,
/// all objectives still recorded.
pub fn single_objective_bo<E, S>(
    rc: &RunConfig,
    evaluator: &E,
    target_index: usize,
    sink: &mut S,
) -> Result<RunState>
where
    E: Evaluator + ?Sized,
    S: CheckpointSink + ?Sized,
{
    if target_index >= rc.objective_spec.len() {
        return Err(Error::Argument(format!(
            "target index {target_index} out of range for {} objectives",
            rc.objective_spec.len()
        )));
    }
    let mut generator = EiGenerator { rc, target: target_index };
    run_loop(rc, evaluator, sink, Vec::new(), &mut generator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{MemorySink, NullSink};

    #[test]
    fn toy_suite_is_deterministic_and_specialized() {
        let a = gen_toy_suite(2, 42).unwrap();
        let b = gen_toy_suite(2, 42).unwrap();
        assert_eq!(a.base, b.base);
        assert_eq!(a.source_models, b.source_models);
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.source_models.len(), 2);

        for m in 0..2 {
            assert!(a.scores[m][m] >= OWN_TASK_FLOOR, "{:?}", a.scores);
            for t in 0..2 {
                if t != m {
                    assert!(a.scores[m][m] > a.scores[m][t], "{:?}", a.scores);
                    assert!(a.scores[m][m] > a.scores[t][m], "{:?}", a.scores);
                }
            }
        }
    }

    #[test]
    fn toy_suite_rejects_bad_task_count() {
        assert!(gen_toy_suite(1, 0).is_err());
        assert!(gen_toy_suite(5, 0).is_err());
    }

    #[test]
    fn suite_rebuild_from_parts_matches() {
        let suite = gen_toy_suite(2, 7).unwrap();
        let rebuilt = ToyTaskSuite::from_parts(
            suite.base.clone(),
            suite.source_models.clone(),
            suite.task_seeds.clone(),
            suite.base_task_seed,
            suite.suite_seed,
        )
        .unwrap();
        assert_eq!(rebuilt.scores, suite.scores);
        assert_eq!(rebuilt.datasets, suite.datasets);
    }

    #[test]
    fn merge_evaluator_near_identity_config_recovers_source_scores() {
        let suite = gen_toy_suite(2, 42).unwrap();
        let evaluator = merge_evaluator(&suite, true).unwrap();
        // Model 1 at full weight/density, model 2 at the floor.
        let config =
            MergeConfig::new(alloc::vec![1.0, 1e-3], alloc::vec![1.0, 1e-3]).unwrap();
        let raw = evaluator.evaluate(&config, 123).unwrap();
        for t in 0..2 {
            assert!(
                (raw[t] - suite.scores[0][t]).abs() <= 0.02,
                "task {t}: {} vs {}",
                raw[t],
                suite.scores[0][t]
            );
        }
        assert!(raw[2] > 0.0, "sparsity of a real merge is positive");
    }

    #[test]
    fn merge_evaluator_is_deterministic_and_objective_count_tracks_flag() {
        let suite = gen_toy_suite(2, 42).unwrap();
        let with = merge_evaluator(&suite, true).unwrap();
        let without = merge_evaluator(&suite, false).unwrap();
        assert_eq!(with.objective_spec().len(), 3);
        assert_eq!(without.objective_spec().len(), 2);

        let config = MergeConfig::new(alloc::vec![0.6, 0.4], alloc::vec![0.7, 0.5]).unwrap();
        let a = with.evaluate(&config, 9).unwrap();
        let b = with.evaluate(&config, 9).unwrap();
        assert_eq!(a, b);
        for t in 0..2 {
            assert!((0.0..=1.0).contains(&a[t]));
        }
    }

    #[test]
    fn benchmark_sphere_pair_is_zero_at_first_center() {
        let ev = benchmark_evaluator("sphere-pair", 1).unwrap();
        let config = MergeConfig::new(alloc::vec![0.25], alloc::vec![0.25]).unwrap();
        let raw = ev.evaluate(&config, 0).unwrap();
        assert_eq!(raw[0], 0.0);
        assert!(raw[1] > 0.0);
    }

    #[test]
    fn benchmark_zdt1_front_satisfies_closed_form() {
        let ev = benchmark_evaluator("zdt1-like", 2).unwrap();
        let lo = crate::merge::CONFIG_LOWER;
        for &u1 in &[0.0, 0.1, 0.5, 0.9, 1.0] {
            let x1 = lo + u1 * (1.0 - lo);
            let config = MergeConfig::from_flat(&[x1.max(lo), lo, lo, lo]).unwrap();
            let raw = ev.evaluate(&config, 0).unwrap();
            assert!(
                (raw[1] - (1.0 - math::sqrt(raw[0]))).abs() < 1e-9,
                "f1={} f2={}",
                raw[0],
                raw[1]
            );
        }
    }

    #[test]
    fn benchmark_evaluator_is_pure() {
        let ev = benchmark_evaluator("zdt1-like", 1).unwrap();
        let config = MergeConfig::new(alloc::vec![0.3], alloc::vec![0.9]).unwrap();
        assert_eq!(ev.evaluate(&config, 1).unwrap(), ev.evaluate(&config, 2).unwrap());
    }

    #[test]
    fn unknown_benchmark_is_an_error() {
        assert!(benchmark_evaluator("zdt9", 1).is_err());
    }

    #[test]
    fn random_search_spends_the_budget_deterministically() {
        let ev = benchmark_evaluator("sphere-pair", 1).unwrap();
        let rc = RunConfig {
            n_init: 4,
            k_iters: 2,
            batch: 3,
            ..RunConfig::new(1, ev.objective_spec().to_vec(), 0)
        };
        let mut s1 = MemorySink::default();
        let mut s2 = MemorySink::default();
        let a = random_search(&rc, &ev, &mut s1, 5).unwrap();
        random_search(&rc, &ev, &mut s2, 5).unwrap();
        assert_eq!(a.evaluations_used, rc.budget());
        assert_eq!(s1.lines, s2.lines);
        // Front well-formed: mutually nondominated.
        let front = a.archive.front_points();
        for (i, p) in front.iter().enumerate() {
            for (j, q) in front.iter().enumerate() {
                if i != j {
                    assert!(!crate::moo::dominates(q, p).unwrap());
                }
            }
        }
    }

    #[test]
    fn grid_search_enumerates_the_full_product_once() {
        let ev = benchmark_evaluator("sphere-pair", 1).unwrap();
        let mut sink = NullSink;
        let state = grid_search(&ev, &[0.25, 0.75], &[0.5, 1.0], &mut sink).unwrap();
        assert_eq!(state.evaluations_used, 4);
        let mut seen: Vec<Vec<f64>> =
            state.archive.records().iter().map(|r| r.config.to_flat()).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            seen,
            alloc::vec![
                alloc::vec![0.25, 0.5],
                alloc::vec![0.25, 1.0],
                alloc::vec![0.75, 0.5],
                alloc::vec![0.75, 1.0],
            ]
        );
    }

    #[test]
    fn grid_search_table_grid_single_model_is_36_points() {
        let ev = benchmark_evaluator("sphere-pair", 1).unwrap();
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
        let state = grid_search(&ev, &grid, &grid, &mut NullSink).unwrap();
        assert_eq!(state.evaluations_used, 36);
    }

    #[test]
    fn grid_search_guards_the_product_size() {
        let ev = benchmark_evaluator("sphere-pair", 3).unwrap();
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
        // 36^3 = 46656 > 10^4.
        assert!(grid_search(&ev, &grid, &grid, &mut NullSink).is_err());
    }

    #[test]
    fn single_objective_bo_minimizes_its_target() {
        let ev = benchmark_evaluator("sphere-pair", 1).unwrap();
        let rc = RunConfig {
            n_init: 6,
            k_iters: 3,
            batch: 3,
            ..RunConfig::new(1, ev.objective_spec().to_vec(), 3)
        };
        let state = single_objective_bo(&rc, &ev, 0, &mut NullSink).unwrap();
        assert_eq!(state.evaluations_used, rc.budget());
        let best_f1 = state
            .archive
            .records()
            .iter()
            .map(|r| r.raw[0])
            .fold(f64::INFINITY, f64::min);
        // The optimum is 0 at (0.25, 0.25); BO should get close.
        assert!(best_f1 < 0.05, "best f1 {best_f1}");

        assert!(single_objective_bo(&rc, &ev, 2, &mut NullSink).is_err());
    }
}
