//! JSON and CSV exports of reports, aggregates and association matrices.
//!
//! CSV headers:
//! - reports: `run_id,seed,episode,rsi,gbc,cai,sii,agreement_ratio,normalized_entropy,inputs_digest`
//! - series: `run_id,episode,kind,rsi,gbc,cai,sii`
//! - aggregate: `metric,n,mean,sd,ci_low,ci_high`
//! - histogram: `bin_start,bin_end,count`
//! - matrix: `agent,<task ids...>`
//!
//! Absent optional metrics are written as empty cells.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::LogError;
use crate::evaluation::{AssociationMatrix, RoundKind};
use crate::metrics::{AggregateReport, Histogram, MetricReport, Summary};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(e: csv::Error) -> LogError {
    LogError::Encode(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LogError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| LogError::Encode(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, LogError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| LogError::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LogError::Encode(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<(), LogError> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

pub fn reports_csv(reports: &[MetricReport]) -> Result<String, LogError> {
    let mut rows = vec![[
        "run_id",
        "seed",
        "episode",
        "rsi",
        "gbc",
        "cai",
        "sii",
        "agreement_ratio",
        "normalized_entropy",
        "inputs_digest",
    ]
    .map(String::from)
    .to_vec()];
    for r in reports {
        rows.push(vec![
            r.run_id.clone(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.rsi.to_string(),
            opt(r.gbc),
            opt(r.cai),
            r.sii.to_string(),
            opt(r.agreement_ratio),
            opt(r.normalized_entropy),
            r.inputs_digest.clone(),
        ]);
    }
    csv_string(rows)
}

pub fn series_csv(reports: &[MetricReport]) -> Result<String, LogError> {
    let mut rows = vec![["run_id", "episode", "kind", "rsi", "gbc", "cai", "sii"]
        .map(String::from)
        .to_vec()];
    for r in reports {
        for p in &r.per_episode {
            let kind = match p.kind {
                RoundKind::Phase => "phase",
                RoundKind::Probe => "probe",
            };
            rows.push(vec![
                r.run_id.clone(),
                p.episode.to_string(),
                kind.to_string(),
                p.values.rsi.to_string(),
                opt(p.values.gbc),
                opt(p.values.cai),
                p.values.sii.to_string(),
            ]);
        }
    }
    csv_string(rows)
}

pub fn aggregate_csv(agg: &AggregateReport) -> Result<String, LogError> {
    let mut rows = vec![["metric", "n", "mean", "sd", "ci_low", "ci_high"]
        .map(String::from)
        .to_vec()];
    for (name, s) in aggregate_metrics(agg) {
        rows.push(vec![
            name.to_string(),
            s.n.to_string(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
        ]);
    }
    csv_string(rows)
}

/// Present summaries by metric name.
pub fn aggregate_metrics(agg: &AggregateReport) -> Vec<(&'static str, &Summary)> {
    let mut out = vec![("rsi", &agg.rsi)];
    if let Some(g) = &agg.gbc {
        out.push(("gbc", g));
    }
    if let Some(c) = &agg.cai {
        out.push(("cai", c));
    }
    out.push(("sii", &agg.sii));
    out
}

pub fn histogram_csv(h: &Histogram) -> Result<String, LogError> {
    let mut rows = vec![["bin_start", "bin_end", "count"].map(String::from).to_vec()];
    for (a, b, c) in h.bins() {
        rows.push(vec![a.to_string(), b.to_string(), c.to_string()]);
    }
    csv_string(rows)
}

pub fn matrix_csv(m: &AssociationMatrix) -> Result<String, LogError> {
    let mut header = vec!["agent".to_string()];
    header.extend(m.tasks.iter().map(|t| t.to_string()));
    let mut rows = vec![header];
    for (agent, row) in &m.rows {
        let mut r = vec![agent.to_string()];
        r.extend(row.iter().map(|x| x.to_string()));
        rows.push(r);
    }
    csv_string(rows)
}

/// Writes `reports.json`, `reports.csv`, `series.csv` and, when given,
/// `aggregate.json`, `aggregate.csv` and `histogram_<metric>.csv` into `dir`.
pub fn write_metric_exports(
    dir: &Path,
    reports: &[MetricReport],
    aggregate: Option<&AggregateReport>,
) -> Result<Vec<String>, LogError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), LogError> {
        write_text(&dir.join(&name), &text)?;
        written.push(name);
        Ok(())
    };
    let json =
        serde_json::to_string_pretty(reports).map_err(|e| LogError::Encode(e.to_string()))?;
    put("reports.json".into(), json + "\n")?;
    put("reports.csv".into(), reports_csv(reports)?)?;
    put("series.csv".into(), series_csv(reports)?)?;
    if let Some(agg) = aggregate {
        let json =
            serde_json::to_string_pretty(agg).map_err(|e| LogError::Encode(e.to_string()))?;
        put("aggregate.json".into(), json + "\n")?;
        put("aggregate.csv".into(), aggregate_csv(agg)?)?;
        for (name, s) in aggregate_metrics(agg) {
            put(
                format!("histogram_{name}.csv"),
                histogram_csv(&s.histogram)?,
            )?;
        }
    }
    Ok(written)
}

pub fn write_matrix(path: &Path, m: &AssociationMatrix) -> Result<(), LogError> {
    write_text(path, &matrix_csv(m)?)
}
