//! End-to-end runs of the `stereosim` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stereosim::runlog::RunLog;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stereosim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereosim"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn run_writes_a_complete_log_named_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = stereosim(
        dir.path(),
        &[
            "run",
            &cfg("random_baseline.toml"),
            "--seed",
            "42",
            "--episodes",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = RunLog::read(&dir.path().join("run_seed42.ndjson")).unwrap();
    assert!(log.is_complete());
    assert_eq!(log.meta.seed, 42);
    assert_eq!(log.episodes.len(), 3);
}

#[test]
fn every_shipped_run_config_parses_and_validates() {
    for name in [
        "annotated.toml",
        "random_baseline.toml",
        "confirmation_bias.toml",
        "llm_gpt4o.toml",
    ] {
        let c = stereosim::config::SimConfig::load(&configs().join(name)).unwrap();
        assert!(stereosim::config::validate_config(c).is_ok(), "{name}");
    }
    let p = stereosim::config::ProfilesFile::load(&configs().join("profiles.toml")).unwrap();
    assert_eq!(p.len(), 4);
    stereosim::metrics::QualConfig::load(&configs().join("eval_backend.toml")).unwrap();
}

#[test]
fn invalid_config_lists_every_violation_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(
        dir.path(),
        "bad.toml",
        "n_agents = 1\nepisodes = 0\np0 = 1.5\n",
    );
    let o = stereosim(dir.path(), &["run", &c]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(
        err.lines()
            .filter(|l| l.trim_start().starts_with("- "))
            .count(),
        3,
        "{err}"
    );
}

#[test]
fn exhausted_transport_exits_3_and_keeps_the_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let c = write(
        dir.path(),
        "llm.toml",
        &format!(
            "n_agents = 2\nepisodes = 2\n[backend]\nkind = \"llm_http\"\nbase_url = \"http://127.0.0.1:{port}/v1\"\nmodel = \"m\"\napi_key_env = \"STEREOSIM_CLI_TEST_KEY\"\n[retry]\nbase_delay_ms = 1\nmax_attempts = 2\ntimeout_s = 2\n"
        ),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_stereosim"))
        .env("STEREOSIM_CLI_TEST_KEY", "k")
        .arg("--out-dir")
        .arg(dir.path())
        .args(["run", &c])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let log = RunLog::read(&dir.path().join("run_seed0.ndjson")).unwrap();
    assert!(!log.is_complete());
}

#[test]
fn batch_then_metrics_and_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = stereosim(
        d,
        &[
            "batch",
            &cfg("confirmation_bias.toml"),
            "--runs",
            "3",
            "--parallelism",
            "2",
            "--seed",
            "100",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("batch_manifest.json").exists());
    let logs: Vec<String> = (100..103)
        .map(|s| d.join(format!("run_seed{s}.ndjson")).display().to_string())
        .collect();
    let corrupt = write(d, "corrupt.ndjson", "{not json\n");

    let mut args = vec!["metrics", corrupt.as_str()];
    args.extend(logs.iter().map(String::as_str));
    let o = stereosim(d, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("corrupt.ndjson"));
    for f in [
        "reports.json",
        "reports.csv",
        "series.csv",
        "aggregate.json",
        "aggregate.csv",
        "histogram_rsi.csv",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }
    let reports = std::fs::read_to_string(d.join("reports.csv")).unwrap();
    assert_eq!(reports.lines().count(), 4);

    let mut args = vec!["heatmap"];
    args.extend(logs.iter().map(String::as_str));
    assert!(stereosim(d, &args).status.success());
    assert!(d.join("heatmap_run_seed101.csv").exists());
    args.extend(["--mode", "pooled"]);
    assert!(stereosim(d, &args).status.success());
    let pooled = std::fs::read_to_string(d.join("heatmap_pooled.csv")).unwrap();
    assert!(pooled.starts_with("agent,"));
    assert_eq!(pooled.lines().count(), 5);
}

#[test]
fn metrics_on_only_corrupt_logs_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "x.ndjson", "garbage\n");
    assert_eq!(
        stereosim(dir.path(), &["metrics", &c]).status.code(),
        Some(2)
    );
    assert_eq!(
        stereosim(dir.path(), &["heatmap", &c]).status.code(),
        Some(2)
    );
}

#[test]
fn ablation_pairs_runs_with_identical_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let o = stereosim(
        dir.path(),
        &[
            "ablation",
            &cfg("confirmation_bias.toml"),
            "--profiles",
            &cfg("profiles.toml"),
            "--seed",
            "5",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = std::fs::read_to_string(dir.path().join("ablation_manifest.json")).unwrap();
    assert!(m.contains("\"td_sn_identical\": true"), "{m}");
    let d = RunLog::read(&dir.path().join("demographic_seed5.ndjson")).unwrap();
    assert_eq!(d.meta.config.profiles.len(), 4);
}

#[test]
fn ablation_with_wrong_profile_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "two.toml",
        "[[profiles]]\nname = \"A\"\nage = 30\ngender = \"f\"\nappearance = \"x\"\n",
    );
    let o = stereosim(
        dir.path(),
        &["ablation", &cfg("confirmation_bias.toml"), "--profiles", &p],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn rule_based_llm_eval_writes_flags_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(stereosim(d, &["-v", "run", &cfg("confirmation_bias.toml")])
        .status
        .success());
    let log = d.join("run_seed1.ndjson").display().to_string();
    let o = stereosim(d, &["llm-eval", &log]);
    assert!(o.status.success(), "{}", stderr(&o));
    let flags = std::fs::read_to_string(d.join("run_seed1_flags.json")).unwrap();
    assert!(flags.contains("\"status\": \"ok\""), "{flags}");
    assert!(!std::fs::read_to_string(d.join("run_seed1_report.txt"))
        .unwrap()
        .is_empty());
}
