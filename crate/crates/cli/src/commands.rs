//! Command implementations behind the `mmmo` binary.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mmmo_core::engine::{self, RunConfig, RunState};
use mmmo_core::harness::{
    self, gen_toy_suite, grid_search, merge_evaluator, random_search, single_objective_bo,
    ToyTaskSuite,
};
use mmmo_core::merge::{dare_ties_merge, MergeConfig};
use mmmo_core::params::{compute_delta, sparsity_metric};

use crate::io::{
    load_suite, read_checkpoint, save_archive, save_suite, FileSink, RunLock,
};
use crate::parallel::{thread_cap, ParallelEvaluator};
use crate::report::{build_report, to_csv, to_json, RunReport};
use crate::{CliError, CliResult};

pub const RUN_CONFIG_FILE: &str = "run_config.toml";
pub const RUN_META_FILE: &str = "run_meta.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Table II grid values, the default for `baseline --method grid`.
pub const DEFAULT_GRID: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

/// Run-directory metadata beyond the run config itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: String,
    pub method: String,
    pub suite_dir: PathBuf,
    #[serde(default)]
    pub target_index: Option<usize>,
}

/// Optional overrides loaded from `--config FILE` (same field names as the
/// run config; omitted fields keep their defaults).
#[derive(Debug, Default, Clone, Deserialize)]
pub struct RunOverrides {
    pub n_init: Option<usize>,
    pub k_iters: Option<usize>,
    pub batch: Option<usize>,
    pub n_mc: Option<usize>,
    pub master_seed: Option<u64>,
    pub sparsity_enabled: Option<bool>,
    pub w2s_enabled: Option<bool>,
    pub fisher_enabled: Option<bool>,
    pub bounds: Option<(f64, f64)>,
}

impl RunOverrides {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad run config {}: {e}", path.display())))
    }
}

/// Ablation label: the full pipeline is MM-MO, everything disabled is plain
/// MOBO, partial combinations spell out their additions.
pub fn run_label(sparsity: bool, w2s: bool, fisher: bool) -> String {
    if sparsity && w2s && fisher {
        return "MM-MO".into();
    }
    let mut label = String::from("MOBO");
    if sparsity {
        label.push_str("+Sparsity");
    }
    if w2s {
        label.push_str("+W2S");
    }
    if fisher {
        label.push_str("+FI");
    }
    label
}

fn build_run_config(
    suite: &ToyTaskSuite,
    overrides: &RunOverrides,
    seed: u64,
    no_w2s: bool,
    no_fisher: bool,
    no_sparsity: bool,
) -> CliResult<RunConfig> {
    let sparsity = !no_sparsity && overrides.sparsity_enabled.unwrap_or(true);
    let mut rc = RunConfig::new(suite.n_tasks(), suite.objective_spec(sparsity), seed);
    rc.sparsity_enabled = sparsity;
    if let Some(v) = overrides.n_init {
        rc.n_init = v;
    }
    if let Some(v) = overrides.k_iters {
        rc.k_iters = v;
    }
    if let Some(v) = overrides.batch {
        rc.batch = v;
    }
    if let Some(v) = overrides.n_mc {
        rc.n_mc = v;
    }
    if let Some(v) = overrides.bounds {
        rc.bounds = v;
    }
    if let Some(v) = overrides.w2s_enabled {
        rc.w2s_enabled = v;
    }
    if let Some(v) = overrides.fisher_enabled {
        rc.fisher_enabled = v;
    }
    if no_w2s {
        rc.w2s_enabled = false;
    }
    if no_fisher {
        rc.fisher_enabled = false;
    }
    rc.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(rc)
}

fn prepare_run_dir(out: &Path, rc: &RunConfig, meta: &RunMeta) -> CliResult<()> {
    fs::create_dir_all(out)?;
    if out.join(CHECKPOINT_FILE).exists() {
        return Err(CliError::usage(format!(
            "{} already contains a run; resume it or pick a fresh directory",
            out.display()
        )));
    }
    let rc_text = toml::to_string(rc)
        .map_err(|e| CliError::runtime(format!("run config serialization: {e}")))?;
    fs::write(out.join(RUN_CONFIG_FILE), rc_text)?;
    let meta_text = toml::to_string(meta)
        .map_err(|e| CliError::runtime(format!("run meta serialization: {e}")))?;
    fs::write(out.join(RUN_META_FILE), meta_text)?;
    Ok(())
}

fn finish_run(
    out: &Path,
    rc: &RunConfig,
    meta: &RunMeta,
    state: &RunState,
) -> CliResult<RunReport> {
    let report = build_report(state.archive.records(), &rc.objective_spec, &meta.label)?;
    fs::write(out.join(REPORT_FILE), to_json(&report))?;
    Ok(report)
}

fn print_run_summary(out: &Path, report: &RunReport) {
    println!("run label: {}", report.label);
    println!("evaluations: {}", report.evaluations);
    println!("final hypervolume: {}", report.final_hypervolume);
    println!("front size: {}", report.front_ids.len());
    let sel = &report.selected;
    println!(
        "selected config (id {}): weights={} densities={}",
        sel.id,
        mmmo_core::merge::format_flat(sel.config.weights()),
        mmmo_core::merge::format_flat(sel.config.densities()),
    );
    let scores: Vec<String> = report
        .objective_names
        .iter()
        .zip(&sel.raw)
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect();
    println!("selected raw scores: {}", scores.join(" "));
    println!("report: {}", out.join(REPORT_FILE).display());
}

pub fn cmd_gen_suite(tasks: usize, seed: u64, out: &Path) -> CliResult<()> {
    if !(2..=4).contains(&tasks) {
        return Err(CliError::usage(format!("--tasks {tasks} outside [2, 4]")));
    }
    let suite = gen_toy_suite(tasks, seed).map_err(|e| CliError::runtime(e.to_string()))?;
    save_suite(&suite, out)?;
    println!("suite written to {}", out.display());
    println!("per-model task scores:");
    print!("{:>10}", "");
    for t in 1..=tasks {
        print!("{:>10}", format!("task{t}"));
    }
    println!();
    for (m, row) in suite.scores.iter().enumerate() {
        print!("{:>10}", format!("model_{}", m + 1));
        for s in row {
            print!("{s:>10.4}");
        }
        println!();
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_optimize(
    suite_dir: &Path,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
    no_w2s: bool,
    no_fisher: bool,
    no_sparsity: bool,
) -> CliResult<()> {
    let suite = load_suite(suite_dir)?;
    let overrides = match config {
        Some(p) => RunOverrides::load(p)?,
        None => RunOverrides::default(),
    };
    let rc = build_run_config(&suite, &overrides, seed, no_w2s, no_fisher, no_sparsity)?;
    let meta = RunMeta {
        label: run_label(rc.sparsity_enabled, rc.w2s_enabled, rc.fisher_enabled),
        method: "optimize".into(),
        suite_dir: suite_dir.to_path_buf(),
        target_index: None,
    };
    prepare_run_dir(out, &rc, &meta)?;
    let _lock = RunLock::acquire(out)?;

    let evaluator = merge_evaluator(&suite, rc.sparsity_enabled)?;
    let wrapped = ParallelEvaluator::new(&evaluator, thread_cap());
    let mut sink = FileSink::create(&out.join(CHECKPOINT_FILE))?;
    let state = engine::optimize(&rc, &wrapped, &mut sink)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let report = finish_run(out, &rc, &meta, &state)?;
    print_run_summary(out, &report);
    Ok(())
}

pub fn cmd_resume(run_dir: &Path) -> CliResult<()> {
    let (rc, meta) = load_run_dir(run_dir)?;
    if meta.method != "optimize" {
        return Err(CliError::usage(format!(
            "only optimize runs can be resumed (this run used {})",
            meta.method
        )));
    }
    let checkpoint = run_dir.join(CHECKPOINT_FILE);
    let existing = read_checkpoint(&checkpoint).map_err(|e| CliError::runtime(e.to_string()))?;
    let suite = load_suite(&meta.suite_dir)?;
    let _lock = RunLock::acquire(run_dir)?;

    let evaluator = merge_evaluator(&suite, rc.sparsity_enabled)?;
    let wrapped = ParallelEvaluator::new(&evaluator, thread_cap());
    let mut sink = FileSink::append(&checkpoint)?;
    let state = engine::resume(&rc, &wrapped, &mut sink, existing)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let report = finish_run(run_dir, &rc, &meta, &state)?;
    print_run_summary(run_dir, &report);
    Ok(())
}

fn parse_values(what: &str, text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| CliError::usage(format!("bad {what} value {p:?}: {e}")))
        })
        .collect()
}

pub fn cmd_merge(
    suite_dir: &Path,
    weights: &str,
    densities: &str,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let suite = load_suite(suite_dir)?;
    let weights = parse_values("weight", weights)?;
    let densities = parse_values("density", densities)?;
    if weights.len() != suite.n_tasks() || densities.len() != suite.n_tasks() {
        return Err(CliError::usage(format!(
            "suite has {} source models; got {} weights and {} densities",
            suite.n_tasks(),
            weights.len(),
            densities.len()
        )));
    }
    let config =
        MergeConfig::new(weights, densities).map_err(|e| CliError::usage(e.to_string()))?;
    let deltas: mmmo_core::Result<Vec<_>> = suite
        .source_models
        .iter()
        .map(|m| compute_delta(m, &suite.base))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let merged = dare_ties_merge(&suite.base, &deltas?, &config, &mut rng)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    save_archive(&merged, out)?;

    println!("merged model written to {}", out.display());
    for (t, dataset) in suite.datasets.iter().enumerate() {
        let score = harness::score_archive(&merged, dataset)?;
        println!("task{} score: {score:.4}", t + 1);
    }
    let sparsity = sparsity_metric(&merged, &suite.base)?;
    println!("sparsity: {sparsity}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_baseline(
    method: &str,
    suite_dir: &Path,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
    target: Option<usize>,
    weight_grid: Option<&str>,
    density_grid: Option<&str>,
    no_sparsity: bool,
) -> CliResult<()> {
    let suite = load_suite(suite_dir)?;
    let overrides = match config {
        Some(p) => RunOverrides::load(p)?,
        None => RunOverrides::default(),
    };
    let rc = build_run_config(&suite, &overrides, seed, false, false, no_sparsity)?;
    let evaluator = merge_evaluator(&suite, rc.sparsity_enabled)?;
    let wrapped = ParallelEvaluator::new(&evaluator, thread_cap());

    let (label, target_index) = match method {
        "random" => ("random-search".to_string(), None),
        "grid" => ("grid-search".to_string(), None),
        "bo" => {
            let t = target.unwrap_or(0);
            if t >= rc.objective_spec.len() {
                return Err(CliError::usage(format!(
                    "--target {t} out of range for {} objectives",
                    rc.objective_spec.len()
                )));
            }
            (format!("BO({})", rc.objective_spec[t].name), Some(t))
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown --method {other:?} (expected random, grid, or bo)"
            )))
        }
    };
    let meta = RunMeta {
        label,
        method: method.to_string(),
        suite_dir: suite_dir.to_path_buf(),
        target_index,
    };
    prepare_run_dir(out, &rc, &meta)?;
    let _lock = RunLock::acquire(out)?;
    let mut sink = FileSink::create(&out.join(CHECKPOINT_FILE))?;

    let state = match method {
        "random" => random_search(&rc, &wrapped, &mut sink, seed),
        "grid" => {
            let wg = match weight_grid {
                Some(t) => parse_values("weight-grid", t)?,
                None => DEFAULT_GRID.to_vec(),
            };
            let dg = match density_grid {
                Some(t) => parse_values("density-grid", t)?,
                None => DEFAULT_GRID.to_vec(),
            };
            grid_search(&wrapped, &wg, &dg, &mut sink)
        }
        "bo" => single_objective_bo(&rc, &wrapped, target_index.unwrap_or(0), &mut sink),
        _ => unreachable!("method validated above"),
    }
    .map_err(CliError::from)?;

    let report = finish_run(out, &rc, &meta, &state)?;
    print_run_summary(out, &report);
    Ok(())
}

fn load_run_dir(run_dir: &Path) -> CliResult<(RunConfig, RunMeta)> {
    let rc_path = run_dir.join(RUN_CONFIG_FILE);
    let meta_path = run_dir.join(RUN_META_FILE);
    if !rc_path.is_file() || !meta_path.is_file() {
        return Err(CliError::usage(format!(
            "{} is not a run directory (missing {RUN_CONFIG_FILE} or {RUN_META_FILE})",
            run_dir.display()
        )));
    }
    let rc: RunConfig = toml::from_str(&fs::read_to_string(&rc_path)?)
        .map_err(|e| CliError::runtime(format!("bad {RUN_CONFIG_FILE}: {e}")))?;
    let meta: RunMeta = toml::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| CliError::runtime(format!("bad {RUN_META_FILE}: {e}")))?;
    Ok((rc, meta))
}

pub fn cmd_report(run_dir: &Path, format: &str) -> CliResult<()> {
    let (rc, meta) = load_run_dir(run_dir)?;
    let records = read_checkpoint(&run_dir.join(CHECKPOINT_FILE))
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let report = build_report(&records, &rc.objective_spec, &meta.label)?;
    match format {
        "json" => println!("{}", to_json(&report)),
        "csv" => print!("{}", to_csv(&report, &rc.objective_spec)),
        other => {
            return Err(CliError::usage(format!(
                "unknown --format {other:?} (expected csv or json)"
            )))
        }
    }
    Ok(())
}
