//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use log::{info, warn};
use stereosim::ablation::{ablation_configs, run_ablation, td_sn_stream, AblationManifest};
use stereosim::batch::{log_file_name, run_batch, MANIFEST_FILE};
use stereosim::config::{validate_config, ProfilesFile, SimConfig};
use stereosim::engine::{run_experiment, PartialRun};
use stereosim::error::{EngineError, LlmError};
use stereosim::evaluation::{association_matrix, EvaluationRound, RoundKind};
use stereosim::export::{write_json, write_matrix, write_metric_exports};
use stereosim::metrics::{
    llm_qualitative_eval, meta_aggregate, report_for_log, FlagStatus, QualConfig,
};
use stereosim::runlog::{NdjsonWriter, RunLog, RunSink};

pub struct Context {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

pub struct RunOverrides {
    pub episodes: Option<u32>,
    pub p0: Option<f64>,
    pub probes: bool,
}

pub enum Failure {
    Invalid(String),
    Transport(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Transport(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Invalid(m) | Failure::Transport(m) => m.clone(),
            Failure::Other(e) => format!("{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig, Failure> {
    let mut config = SimConfig::load(path).map_err(|e| Failure::Invalid(e.to_string()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn validated(config: SimConfig) -> Result<SimConfig, Failure> {
    validate_config(config).map_err(|violations| {
        let lines: Vec<String> = violations.iter().map(|v| format!("  - {v}")).collect();
        Failure::Invalid(format!("invalid configuration:\n{}", lines.join("\n")))
    })
}

fn stopped(p: PartialRun, log_path: &Path) -> Failure {
    let msg = format!(
        "{p}; partial log with {} episodes at {}",
        p.log.episodes.len(),
        log_path.display()
    );
    match p.error {
        EngineError::Config(_) => Failure::Invalid(msg),
        EngineError::TransportExhausted(_) => Failure::Transport(msg),
        _ => Failure::Other(anyhow!(msg)),
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::from)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn final_phase_round(log: &RunLog) -> Option<&EvaluationRound> {
    log.evaluations
        .iter()
        .rev()
        .find(|r| r.kind == RoundKind::Phase && r.valid)
}

fn read_logs(paths: &[PathBuf]) -> Vec<(String, RunLog)> {
    paths
        .iter()
        .filter_map(|p| match RunLog::read(p) {
            Ok(log) => Some((stem(p), log)),
            Err(e) => {
                warn!("skipping {}: {e}", p.display());
                eprintln!("warning: skipping {}: {e}", p.display());
                None
            }
        })
        .collect()
}

pub fn run(ctx: &Context, config: &Path, o: RunOverrides, log: Option<PathBuf>) -> CmdResult {
    let mut config = load_config(config, ctx.seed)?;
    if let Some(e) = o.episodes {
        config.episodes = e;
    }
    if let Some(p) = o.p0 {
        config.p0 = p;
    }
    config.probes |= o.probes;
    let config = validated(config)?;
    let path = log.unwrap_or_else(|| ctx.out_dir.join(log_file_name(config.seed)));
    let mut sink = NdjsonWriter::create(&path)
        .context("opening log")
        .map_err(Failure::from)?;
    info!("running seed {} into {}", config.seed, path.display());
    let run =
        run_experiment(config, &mut sink as &mut dyn RunSink).map_err(|p| stopped(p, &path))?;
    println!(
        "{}: {} episodes, {} evaluation rounds",
        path.display(),
        run.episodes.len(),
        run.evaluations.len()
    );
    Ok(())
}

pub fn batch(ctx: &Context, config: &Path, runs: u32, parallelism: usize) -> CmdResult {
    let config = validated(load_config(config, ctx.seed)?)?;
    let manifest = run_batch(&config, runs, parallelism.max(1), &ctx.out_dir)
        .context("running batch")
        .map_err(Failure::from)?;
    let ok = manifest.runs.iter().filter(|r| r.ok).count();
    println!(
        "{}: {ok}/{} runs completed",
        ctx.out_dir.join(MANIFEST_FILE).display(),
        manifest.n_runs
    );
    for r in manifest.runs.iter().filter(|r| !r.ok) {
        eprintln!(
            "warning: seed {} stopped early ({}): {}",
            r.seed,
            r.error_kind.as_deref().unwrap_or("unknown"),
            r.error.as_deref().unwrap_or("")
        );
    }
    if ok == 0 && runs > 0 {
        let msg = format!("all {runs} runs failed; see {MANIFEST_FILE}");
        let transport = manifest
            .runs
            .iter()
            .all(|r| r.error_kind.as_deref() == Some("transport_exhausted"));
        return Err(if transport {
            Failure::Transport(msg)
        } else {
            Failure::Other(anyhow!(msg))
        });
    }
    Ok(())
}

pub fn metrics(ctx: &Context, paths: &[PathBuf]) -> CmdResult {
    let logs = read_logs(paths);
    if logs.is_empty() {
        return Err(Failure::Invalid("no readable logs".into()));
    }
    let mut reports = Vec::new();
    for (id, log) in &logs {
        match report_for_log(log, id) {
            Ok(r) => reports.push(r),
            Err(e) => eprintln!("warning: no metrics for {id}: {e}"),
        }
    }
    if reports.is_empty() {
        return Err(Failure::Invalid(
            "no log contains a valid end-of-phase evaluation".into(),
        ));
    }
    let aggregate = if reports.len() >= 2 {
        Some(
            meta_aggregate(&reports)
                .context("aggregating")
                .map_err(Failure::from)?,
        )
    } else {
        None
    };
    create_dir(&ctx.out_dir)?;
    let written = write_metric_exports(&ctx.out_dir, &reports, aggregate.as_ref())
        .context("writing exports")
        .map_err(Failure::from)?;
    for r in &reports {
        let gbc = r.gbc.map_or("n/a".into(), |v| format!("{v:.4}"));
        let cai = r.cai.map_or("n/a".into(), |v| format!("{v:.4}"));
        println!(
            "{}: RSI={:.4} GBC={gbc} CAI={cai} SII={:.4}",
            r.run_id, r.rsi, r.sii
        );
    }
    for f in written {
        info!("wrote {f}");
    }
    Ok(())
}

pub fn heatmap(ctx: &Context, paths: &[PathBuf], pooled: bool) -> CmdResult {
    let logs = read_logs(paths);
    let rounds: Vec<(&str, &EvaluationRound)> = logs
        .iter()
        .filter_map(|(id, log)| match final_phase_round(log) {
            Some(r) => Some((id.as_str(), r)),
            None => {
                eprintln!("warning: {id} has no valid end-of-phase evaluation");
                None
            }
        })
        .collect();
    if rounds.is_empty() {
        return Err(Failure::Invalid("no valid end-of-phase evaluations".into()));
    }
    create_dir(&ctx.out_dir)?;
    let write = |name: String, set: &[(&str, &EvaluationRound)], across: bool| -> CmdResult {
        let m = association_matrix(set, across)
            .context("building matrix")
            .map_err(Failure::from)?;
        let csv = ctx.out_dir.join(format!("{name}.csv"));
        write_matrix(&csv, &m)
            .context("writing matrix")
            .map_err(Failure::from)?;
        write_json(&ctx.out_dir.join(format!("{name}.json")), &m)
            .context("writing matrix")
            .map_err(Failure::from)?;
        println!("{}", csv.display());
        Ok(())
    };
    if pooled {
        write("heatmap_pooled".into(), &rounds, true)?;
    } else {
        for r in &rounds {
            write(format!("heatmap_{}", r.0), std::slice::from_ref(r), false)?;
        }
    }
    Ok(())
}

pub fn ablation(ctx: &Context, config: &Path, profiles: &Path) -> CmdResult {
    let base = load_config(config, ctx.seed)?;
    let profiles = ProfilesFile::load(profiles).map_err(|e| Failure::Invalid(e.to_string()))?;
    let (neutral, demographic) = ablation_configs(&base, profiles.clone());
    validated(neutral)?;
    validated(demographic)?;
    let seed = base.seed;
    let n_path = ctx.out_dir.join(format!("neutral_seed{seed}.ndjson"));
    let d_path = ctx.out_dir.join(format!("demographic_seed{seed}.ndjson"));
    let open = |p: &Path| {
        NdjsonWriter::create(p)
            .context("opening log")
            .map_err(Failure::from)
    };
    let (mut n_sink, mut d_sink) = (open(&n_path)?, open(&d_path)?);
    let (n, d) = run_ablation(&base, profiles, &mut n_sink, &mut d_sink).map_err(|p| {
        let path = if p.log.meta.config.profiles.is_empty() {
            &n_path
        } else {
            &d_path
        };
        stopped(p, path)
    })?;
    let manifest = AblationManifest {
        seed,
        neutral_log: n_path.display().to_string(),
        demographic_log: d_path.display().to_string(),
        td_sn_identical: td_sn_stream(&n) == td_sn_stream(&d),
    };
    let m_path = ctx.out_dir.join("ablation_manifest.json");
    write_json(&m_path, &manifest)
        .context("writing manifest")
        .map_err(Failure::from)?;
    println!(
        "{}: td/sn identical = {}",
        m_path.display(),
        manifest.td_sn_identical
    );
    Ok(())
}

pub fn llm_eval(ctx: &Context, log: &Path, backend: Option<&Path>) -> CmdResult {
    let run = RunLog::read(log).map_err(|e| Failure::Invalid(format!("{}: {e}", log.display())))?;
    let qc = match backend {
        Some(p) => QualConfig::load(p).map_err(|e| Failure::Invalid(e.to_string()))?,
        None => QualConfig::default(),
    };
    let llm_failure = |e: LlmError| match e {
        LlmError::Exhausted { .. } => Failure::Transport(e.to_string()),
        LlmError::MissingCredential(_) => Failure::Invalid(e.to_string()),
        other => Failure::Other(anyhow!(other)),
    };
    let (eval, parser) = qc.backends().map_err(llm_failure)?;
    let result = llm_qualitative_eval(&run, &eval, &parser).map_err(llm_failure)?;
    create_dir(&ctx.out_dir)?;
    let id = stem(log);
    let flags_path = ctx.out_dir.join(format!("{id}_flags.json"));
    write_json(&flags_path, &result.flags_document())
        .context("writing flags")
        .map_err(Failure::from)?;
    let report_path = ctx.out_dir.join(format!("{id}_report.txt"));
    std::fs::write(&report_path, &result.report)
        .with_context(|| format!("writing {}", report_path.display()))
        .map_err(Failure::from)?;
    if result.status == FlagStatus::Indeterminate {
        eprintln!("warning: flags indeterminate; the parser output did not match the schema");
    }
    println!("{}", flags_path.display());
    Ok(())
}
