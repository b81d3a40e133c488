//! `stereosim` command line: runs, batches, metrics, heatmaps, ablations and
//! qualitative evaluation.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid input (config, profiles
//! or logs without usable data), 3 transport exhaustion after retries. A run
//! that stops early always leaves its partial log on disk.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "stereosim",
    version,
    about = "Multi-agent workplace simulation and stereotype metrics"
)]
struct Cli {
    /// Overrides the config seed (the base seed for `batch`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for logs and exports.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Repeat for more log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long = "verbosity", action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs one experiment and streams its log.
    Run {
        config: PathBuf,
        #[arg(long)]
        episodes: Option<u32>,
        #[arg(long)]
        p0: Option<f64>,
        /// Evaluate after every episode for time series.
        #[arg(long)]
        probes: bool,
        /// Log path; defaults to `<out-dir>/run_seed<seed>.ndjson`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Runs consecutive seeds in parallel.
    Batch {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: u32,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Computes per-run reports and, for two or more logs, an aggregate.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Writes person-job association matrices.
    Heatmap {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = HeatmapMode::Single)]
        mode: HeatmapMode,
    },
    /// Runs the neutral and demographic variants of one config and seed.
    Ablation {
        config: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
    },
    /// Writes a qualitative report and bias flags for one log.
    LlmEval {
        log: PathBuf,
        /// Evaluator file with optional `[eval]` and `[parser]` tables; the
        /// rule-based evaluator is used when omitted.
        #[arg(long)]
        backend: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum HeatmapMode {
    Single,
    Pooled,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    let result = match cli.command {
        Command::Run {
            config,
            episodes,
            p0,
            probes,
            log,
        } => commands::run(
            &ctx,
            &config,
            commands::RunOverrides {
                episodes,
                p0,
                probes,
            },
            log,
        ),
        Command::Batch {
            config,
            runs,
            parallelism,
        } => commands::batch(&ctx, &config, runs, parallelism),
        Command::Metrics { logs } => commands::metrics(&ctx, &logs),
        Command::Heatmap { logs, mode } => {
            commands::heatmap(&ctx, &logs, mode == HeatmapMode::Pooled)
        }
        Command::Ablation { config, profiles } => commands::ablation(&ctx, &config, &profiles),
        Command::LlmEval { log, backend } => commands::llm_eval(&ctx, &log, backend.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
