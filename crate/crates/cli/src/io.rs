//! On-disk formats: tensor archives, suite directories with their manifest,
//! append-only checkpoint files, and the per-run lock.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mmmo_core::engine::{decode_record, encode_record, CheckpointSink};
use mmmo_core::harness::ToyTaskSuite;
use mmmo_core::moo::EvaluationRecord;
use mmmo_core::params::TensorArchive;
use mmmo_core::{Error, Result};

/// Reads a binary tensor archive from disk.
pub fn load_archive(path: &Path) -> Result<TensorArchive> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Validation(format!("cannot read {}: {e}", path.display()))
    })?;
    TensorArchive::decode(&bytes)
}

/// Writes a binary tensor archive; two saves of equal archives are
/// byte-identical.
pub fn save_archive(archive: &TensorArchive, path: &Path) -> Result<()> {
    fs::write(path, archive.encode()).map_err(|e| {
        Error::Validation(format!("cannot write {}: {e}", path.display()))
    })
}

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Suite directory manifest: which archives belong to the suite and the
/// dataset seeds needed to regenerate its tasks bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub version: u32,
    pub suite_seed: u64,
    pub n_tasks: usize,
    pub base_task_seed: u64,
    pub task_seeds: Vec<u64>,
    pub architecture: Vec<usize>,
    pub base_file: String,
    pub model_files: Vec<String>,
    /// `scores[m][t]` = accuracy of source model `m` on task `t`.
    pub scores: Vec<Vec<f64>>,
}

/// Persists a suite as `base.mmta`, `model_<i>.mmta`, and `manifest.toml`.
pub fn save_suite(suite: &ToyTaskSuite, dir: &Path) -> crate::CliResult<()> {
    fs::create_dir_all(dir)?;
    save_archive(&suite.base, &dir.join("base.mmta"))?;
    let mut model_files = Vec::new();
    for (i, model) in suite.source_models.iter().enumerate() {
        let name = format!("model_{}.mmta", i + 1);
        save_archive(model, &dir.join(&name))?;
        model_files.push(name);
    }
    let manifest = SuiteManifest {
        version: 1,
        suite_seed: suite.suite_seed,
        n_tasks: suite.n_tasks(),
        base_task_seed: suite.base_task_seed,
        task_seeds: suite.task_seeds.clone(),
        architecture: vec![8, 16, 16, 2],
        base_file: "base.mmta".into(),
        model_files,
        scores: suite.scores.clone(),
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| crate::CliError::runtime(format!("manifest serialization: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// Loads a suite directory; datasets are regenerated from the manifest
/// seeds, so the result matches the generated suite exactly.
pub fn load_suite(dir: &Path) -> crate::CliResult<ToyTaskSuite> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(crate::CliError::usage(format!(
            "{} is not a suite directory (missing {MANIFEST_FILE})",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: SuiteManifest = toml::from_str(&text)
        .map_err(|e| crate::CliError::runtime(format!("bad manifest: {e}")))?;
    let base = load_archive(&dir.join(&manifest.base_file))?;
    let models: Result<Vec<TensorArchive>> = manifest
        .model_files
        .iter()
        .map(|f| load_archive(&dir.join(f)))
        .collect();
    Ok(ToyTaskSuite::from_parts(
        base,
        models?,
        manifest.task_seeds,
        manifest.base_task_seed,
        manifest.suite_seed,
    )?)
}

/// Append-only checkpoint file: one JSON record per line.
pub struct FileSink {
    file: fs::File,
}

impl FileSink {
    /// Creates a fresh checkpoint (fails if one already exists).
    pub fn create(path: &Path) -> crate::CliResult<Self> {
        let file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| {
                crate::CliError::runtime(format!("cannot create {}: {e}", path.display()))
            })?;
        Ok(Self { file })
    }

    /// Opens an existing checkpoint for appending (resume).
    pub fn append(path: &Path) -> crate::CliResult<Self> {
        let file = fs::OpenOptions::new().append(true).open(path).map_err(|e| {
            crate::CliError::runtime(format!("cannot open {}: {e}", path.display()))
        })?;
        Ok(Self { file })
    }
}

impl CheckpointSink for FileSink {
    fn append_batch(&mut self, lines: &[String]) -> Result<()> {
        for line in lines {
            self.file
                .write_all(line.as_bytes())
                .and_then(|_| self.file.write_all(b"\n"))
                .map_err(|e| Error::Validation(format!("checkpoint write failed: {e}")))?;
        }
        self.file
            .flush()
            .map_err(|e| Error::Validation(format!("checkpoint flush failed: {e}")))
    }
}

/// A corrupt checkpoint: the offending 1-based line plus every record that
/// decoded cleanly before it.
#[derive(Debug)]
pub struct CheckpointReadError {
    pub line: usize,
    pub message: String,
    pub recovered: Vec<EvaluationRecord>,
}

impl std::fmt::Display for CheckpointReadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "checkpoint corrupt at line {}: {} ({} records recovered)",
            self.line,
            self.message,
            self.recovered.len()
        )
    }
}

/// Reads every record of a checkpoint file.
pub fn read_checkpoint(path: &Path) -> std::result::Result<Vec<EvaluationRecord>, CheckpointReadError> {
    let text = fs::read_to_string(path).map_err(|e| CheckpointReadError {
        line: 0,
        message: format!("cannot read {}: {e}", path.display()),
        recovered: Vec::new(),
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        match decode_record(line, i + 1) {
            Ok(r) => records.push(r),
            Err(e) => {
                return Err(CheckpointReadError {
                    line: i + 1,
                    message: e.to_string(),
                    recovered: records,
                })
            }
        }
    }
    Ok(records)
}

/// Rewrites a checkpoint prefix (used by tests to simulate interruption).
pub fn write_checkpoint(path: &Path, records: &[EvaluationRecord]) -> crate::CliResult<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&encode_record(r));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

const LOCK_FILE: &str = ".lock";

/// One run per output directory: holds `.lock` while a run is active and
/// removes it on drop. A leftover lock from a killed process must be removed
/// by hand before resuming.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> crate::CliResult<Self> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(crate::CliError::runtime(format!(
                    "{} is locked by another run (remove {} if it is stale)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
