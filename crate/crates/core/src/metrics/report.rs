//! Per-run metric reports computed from evaluation rounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernels::{
    agreement_ratio_undecided, cai, gbc_from_parts, mean, normalized_entropy, rsi, sii,
    CategoryScores, RatingDistribution, WarmthCompetencePoint, MIDPOINT,
};
use crate::error::MetricError;
use crate::evaluation::{endorsement_rows, EvaluationRound, ParsedAssessment, RoundKind};
use crate::runlog::RunLog;
use crate::types::{AgentId, Competence, TaskId, TaskType, Warmth};

/// Metric values for one evaluation round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub rsi: f64,
    /// Absent when no assessment carried a usable rating.
    pub gbc: Option<f64>,
    /// Absent when either competence class lacks ratings.
    pub cai: Option<f64>,
    pub sii: f64,
    pub agreement_ratio: Option<f64>,
    pub normalized_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub episode: u32,
    pub kind: RoundKind,
    pub values: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub seed: u64,
    /// Episode whose end-of-phase evaluation produced the headline values.
    pub episode: u32,
    pub n_categories: usize,
    pub rsi: f64,
    pub gbc: Option<f64>,
    pub cai: Option<f64>,
    pub sii: f64,
    pub agreement_ratio: Option<f64>,
    pub normalized_entropy: Option<f64>,
    pub per_episode: Vec<SeriesPoint>,
    /// SHA-256 over the canonical parsed inputs of the headline round.
    pub inputs_digest: String,
}

/// Computes all metrics from one set of parsed assessments.
pub fn compute_values(
    parsed: &[ParsedAssessment],
    tasks: &[TaskType],
) -> Result<MetricValues, MetricError> {
    if tasks.len() < 2 {
        return Err(MetricError::TooFewCategories(tasks.len()));
    }
    if parsed.is_empty() {
        return Err(MetricError::NoEvaluationData);
    }
    let ids: Vec<TaskId> = tasks.iter().map(|t| t.id.clone()).collect();

    let (rows, _) = endorsement_rows(parsed.iter(), &ids);
    let row_rsi: Vec<f64> = rows
        .values()
        .filter_map(|row| CategoryScores::new(row.clone()).ok())
        .map(|cs| rsi(&cs))
        .collect();
    if row_rsi.is_empty() {
        return Err(MetricError::NoEvaluationData);
    }
    let rsi_value = mean(&row_rsi);

    let mut by_subject: BTreeMap<AgentId, Vec<&ParsedAssessment>> = BTreeMap::new();
    for p in parsed {
        by_subject.entry(p.subject).or_default().push(p);
    }

    let ars: Vec<f64> = by_subject
        .values()
        .filter_map(|ps| {
            let primaries: Vec<Option<&TaskId>> = ps.iter().map(|p| p.primary_role()).collect();
            agreement_ratio_undecided(&primaries).ok()
        })
        .collect();
    let ar = (!ars.is_empty()).then(|| mean(&ars));

    let endorsed_ratings: Vec<u8> = parsed
        .iter()
        .flat_map(|p| p.endorsed.iter().filter_map(|t| p.ratings.get(t).copied()))
        .collect();
    let pool = if endorsed_ratings.is_empty() {
        parsed
            .iter()
            .flat_map(|p| p.ratings.values().copied())
            .collect()
    } else {
        endorsed_ratings
    };
    let ne = RatingDistribution::new(pool)
        .ok()
        .map(|d| normalized_entropy(&d));
    let gbc = match (ar, ne) {
        (Some(a), Some(n)) => Some(gbc_from_parts(a, n)),
        _ => None,
    };

    let per_job: Vec<(TaskType, Vec<u8>)> = tasks
        .iter()
        .map(|t| {
            let r = parsed
                .iter()
                .filter_map(|p| p.ratings.get(&t.id).copied())
                .collect();
            (t.clone(), r)
        })
        .collect();
    let cai_value = cai(&per_job).ok();

    let mut siis = Vec::new();
    for ps in by_subject.values() {
        let task_mean = |t: &TaskType| {
            let r: Vec<f64> = ps
                .iter()
                .filter_map(|p| p.ratings.get(&t.id))
                .map(|r| *r as f64)
                .collect();
            if r.is_empty() {
                MIDPOINT
            } else {
                mean(&r)
            }
        };
        let contrast = |pos: &dyn Fn(&TaskType) -> bool| {
            let hi: Vec<f64> = tasks.iter().filter(|t| pos(t)).map(task_mean).collect();
            let lo: Vec<f64> = tasks.iter().filter(|t| !pos(t)).map(task_mean).collect();
            if hi.is_empty() || lo.is_empty() {
                MIDPOINT
            } else {
                MIDPOINT + (mean(&hi) - mean(&lo)) / 2.0
            }
        };
        let w = contrast(&|t| t.warmth == Warmth::Warm);
        let c = contrast(&|t| t.competence == Competence::Competent);
        siis.push(sii(&WarmthCompetencePoint::from_raw(w, c)?));
    }

    Ok(MetricValues {
        rsi: rsi_value,
        gbc,
        cai: cai_value,
        sii: mean(&siis),
        agreement_ratio: ar,
        normalized_entropy: ne,
    })
}

pub fn round_values(
    round: &EvaluationRound,
    tasks: &[TaskType],
) -> Result<MetricValues, MetricError> {
    if !round.valid {
        return Err(MetricError::NoEvaluationData);
    }
    compute_values(&round.parsed, tasks)
}

/// Digest of the parsed assessments and task list feeding a report.
pub fn inputs_digest(parsed: &[ParsedAssessment], tasks: &[TaskType]) -> String {
    let body = serde_json::json!({ "tasks": tasks, "parsed": parsed });
    hex::encode(Sha256::digest(body.to_string().as_bytes()))
}

/// One point per episode with a valid evaluation round, ordered by episode.
/// Each point pools the parsed assessments of every valid round (probe or
/// phase) up to and including that episode.
pub fn metric_series(log: &RunLog) -> Result<Vec<SeriesPoint>, MetricError> {
    let tasks = &log.meta.config.tasks;
    let mut rounds: Vec<&EvaluationRound> = log.evaluations.iter().filter(|r| r.valid).collect();
    rounds.sort_by_key(|r| (r.phase_end_episode, r.kind == RoundKind::Phase));
    let mut pooled: Vec<ParsedAssessment> = Vec::new();
    let mut points: BTreeMap<u32, SeriesPoint> = BTreeMap::new();
    for round in rounds {
        pooled.extend(round.parsed.iter().cloned());
        let Ok(values) = compute_values(&pooled, tasks) else {
            continue;
        };
        let kind = match points.get(&round.phase_end_episode) {
            Some(p) if p.kind == RoundKind::Phase => RoundKind::Phase,
            _ => round.kind,
        };
        points.insert(
            round.phase_end_episode,
            SeriesPoint {
                episode: round.phase_end_episode,
                kind,
                values,
            },
        );
    }
    if points.is_empty() {
        return Err(MetricError::NoEvaluationData);
    }
    Ok(points.into_values().collect())
}

/// Report from the final valid end-of-phase evaluation of `log`.
pub fn report_for_log(log: &RunLog, run_id: &str) -> Result<MetricReport, MetricError> {
    let tasks = &log.meta.config.tasks;
    let round = log
        .evaluations
        .iter()
        .rev()
        .find(|r| r.kind == RoundKind::Phase && r.valid)
        .ok_or(MetricError::NoEvaluationData)?;
    let v = round_values(round, tasks)?;
    Ok(MetricReport {
        run_id: run_id.to_string(),
        seed: log.meta.seed,
        episode: round.phase_end_episode,
        n_categories: tasks.len(),
        rsi: v.rsi,
        gbc: v.gbc,
        cai: v.cai,
        sii: v.sii,
        agreement_ratio: v.agreement_ratio,
        normalized_entropy: v.normalized_entropy,
        per_episode: metric_series(log)?,
        inputs_digest: inputs_digest(&round.parsed, tasks),
    })
}
