//! Batches of independent runs with consecutive seeds.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::engine::{error_kind, run_experiment, PartialRun};
use crate::error::LogError;
use crate::runlog::{MemorySink, NdjsonWriter, RunLog, RunSink};

/// Seeds `seed + 0 .. seed + n_runs - 1`.
pub fn batch_seeds(seed: u64, n_runs: u32) -> Vec<u64> {
    (0..n_runs as u64).map(|i| seed.wrapping_add(i)).collect()
}

pub fn log_file_name(seed: u64) -> String {
    format!("run_seed{seed}.ndjson")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub seed: u64,
    pub log: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub base_seed: u64,
    pub n_runs: u32,
    pub parallelism: usize,
    pub runs: Vec<BatchEntry>,
    /// Seeds of runs that stopped early.
    pub failures: Vec<u64>,
}

pub const MANIFEST_FILE: &str = "batch_manifest.json";

fn pool(parallelism: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool")
}

fn seeded(config: &SimConfig, seed: u64) -> SimConfig {
    let mut c = config.clone();
    c.seed = seed;
    c
}

/// Runs the batch without touching disk; results are in seed order.
pub fn run_batch_in_memory(
    config: &SimConfig,
    n_runs: u32,
    parallelism: usize,
) -> Vec<(u64, Result<RunLog, PartialRun>)> {
    let seeds = batch_seeds(config.seed, n_runs);
    pool(parallelism).install(|| {
        seeds
            .par_iter()
            .map(|s| {
                (
                    *s,
                    run_experiment(seeded(config, *s), &mut MemorySink::default()),
                )
            })
            .collect()
    })
}

/// Runs the batch, streaming each log to `out_dir` and writing a manifest.
/// A failed run is recorded and the batch continues.
pub fn run_batch(
    config: &SimConfig,
    n_runs: u32,
    parallelism: usize,
    out_dir: &Path,
) -> Result<BatchManifest, LogError> {
    std::fs::create_dir_all(out_dir).map_err(|source| LogError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let seeds = batch_seeds(config.seed, n_runs);
    let runs: Vec<BatchEntry> = pool(parallelism).install(|| {
        seeds
            .par_iter()
            .map(|seed| {
                let path: PathBuf = out_dir.join(log_file_name(*seed));
                let log = path
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let failed = |kind: &str, msg: String| BatchEntry {
                    seed: *seed,
                    log: log.clone(),
                    ok: false,
                    error_kind: Some(kind.to_string()),
                    error: Some(msg),
                };
                let mut sink = match NdjsonWriter::create(&path) {
                    Ok(w) => w,
                    Err(e) => return failed("sink", e.to_string()),
                };
                match run_experiment(seeded(config, *seed), &mut sink as &mut dyn RunSink) {
                    Ok(_) => BatchEntry {
                        seed: *seed,
                        log: log.clone(),
                        ok: true,
                        error_kind: None,
                        error: None,
                    },
                    Err(p) => failed(error_kind(&p.error), p.error.to_string()),
                }
            })
            .collect()
    });
    let manifest = BatchManifest {
        base_seed: config.seed,
        n_runs,
        parallelism,
        failures: runs.iter().filter(|r| !r.ok).map(|r| r.seed).collect(),
        runs,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| LogError::Encode(e.to_string()))?;
    std::fs::write(&path, text).map_err(|source| LogError::Io { path, source })?;
    Ok(manifest)
}
