//! Peer evaluation: assessment collection, parsing into role mappings, and
//! person-job association matrices.
//!
//! Rule-based assessment grammar (one statement per line, case-insensitive
//! task names, spaces allowed in place of underscores):
//!
//! ```text
//! person_2 is suited to manager, 8/10
//! person_2 rated janitor 3/10
//! ```
//!
//! The first form endorses the role and rates it; the second only rates it.
//! The rating is optional in the first form. Ratings outside 1..=10 are
//! clamped with a warning.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, LazyLock};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::live::extract_json_object;
use crate::agents::llm::{ChatMessage, LlmClient};
use crate::agents::prompt::PARSER;
use crate::agents::{AgentBackend, AssessmentRequest};
use crate::config::{ParserSpec, RetryPolicy};
use crate::error::{BackendError, EvalError, LlmError};
use crate::types::{AgentId, Event, PeerAssessment, RoleMappings, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    /// End-of-phase evaluation.
    Phase,
    /// Optional per-episode probe for time series.
    Probe,
}

/// Structured content of one assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAssessment {
    pub evaluator: AgentId,
    pub subject: AgentId,
    pub endorsed: BTreeSet<TaskId>,
    pub ratings: BTreeMap<TaskId, u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ParsedAssessment {
    /// The unique highest-rated endorsed role, if any.
    pub fn primary_role(&self) -> Option<&TaskId> {
        let rated: Vec<(&TaskId, u8)> = self
            .endorsed
            .iter()
            .map(|t| (t, self.ratings.get(t).copied().unwrap_or(0)))
            .collect();
        let max = rated.iter().map(|(_, r)| *r).max()?;
        let mut top = rated.iter().filter(|(_, r)| *r == max);
        let first = top.next()?;
        top.next().is_none().then_some(first.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRound {
    pub kind: RoundKind,
    pub phase_end_episode: u32,
    pub tasks: Vec<TaskId>,
    pub assessments: Vec<PeerAssessment>,
    pub parsed: Vec<ParsedAssessment>,
    pub mappings: RoleMappings,
    /// False when no assessment could be parsed.
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<String>,
}

/// Turns one assessment text into structured data.
pub trait AssessmentParser: Send + Sync {
    fn kind(&self) -> &'static str;

    fn parse(
        &self,
        assessment: &PeerAssessment,
        tasks: &[TaskId],
    ) -> Result<ParsedAssessment, String>;
}

static SUITED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(.+?)\s+is\s+suited\s+to\s+([a-z_ ]+?)\s*(?:,\s*(-?\d+)\s*/\s*10)?\s*\.?\s*$",
    )
    .unwrap()
});
static RATED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(.+?)\s+rated\s+([a-z_ ]+?)\s+(-?\d+)\s*/\s*10\s*\.?\s*$").unwrap()
});

fn normalize_task(raw: &str, tasks: &[TaskId]) -> Option<TaskId> {
    let norm = raw.trim().to_lowercase().replace(' ', "_");
    tasks.iter().find(|t| t.as_str() == norm).cloned()
}

/// Clamps to the 1..=10 scale, noting any adjustment.
pub fn clamp_rating(raw: i64, warnings: &mut Vec<String>, task: &TaskId) -> u8 {
    let r = raw.clamp(1, 10);
    if r != raw {
        warnings.push(format!("rating {raw}/10 for {task} clamped to {r}"));
        log::warn!("rating {raw}/10 for {task} clamped to {r}");
    }
    r as u8
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleParser;

impl AssessmentParser for RuleParser {
    fn kind(&self) -> &'static str {
        "rule_based"
    }

    fn parse(&self, a: &PeerAssessment, tasks: &[TaskId]) -> Result<ParsedAssessment, String> {
        let mut out = ParsedAssessment {
            evaluator: a.evaluator,
            subject: a.subject,
            endorsed: BTreeSet::new(),
            ratings: BTreeMap::new(),
            warnings: Vec::new(),
        };
        let mut recognized = 0;
        for line in a.text.lines() {
            let (task_raw, rating, endorse) = if let Some(c) = SUITED.captures(line) {
                (
                    c[2].to_string(),
                    c.get(3).map(|m| m.as_str().to_string()),
                    true,
                )
            } else if let Some(c) = RATED.captures(line) {
                (c[2].to_string(), Some(c[3].to_string()), false)
            } else {
                continue;
            };
            let Some(task) = normalize_task(&task_raw, tasks) else {
                out.warnings
                    .push(format!("unknown task {:?}", task_raw.trim()));
                continue;
            };
            recognized += 1;
            if endorse {
                out.endorsed.insert(task.clone());
            }
            if let Some(r) = rating {
                let raw: i64 = r.parse().unwrap_or(i64::MAX);
                let v = clamp_rating(raw, &mut out.warnings, &task);
                out.ratings.insert(task, v);
            }
        }
        if recognized == 0 {
            return Err("no recognizable assessment statement".into());
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParserJson {
    suitable_roles: Vec<String>,
    ratings: BTreeMap<String, i64>,
}

/// Parser agent backed by a chat model, strict JSON contract, one re-ask.
pub struct LlmParser {
    client: LlmClient,
}

impl LlmParser {
    pub fn new(client: LlmClient) -> Self {
        LlmParser { client }
    }

    fn decode(
        &self,
        reply: &str,
        a: &PeerAssessment,
        tasks: &[TaskId],
    ) -> Result<ParsedAssessment, String> {
        let json = extract_json_object(reply).ok_or("no JSON object")?;
        let p: ParserJson = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut out = ParsedAssessment {
            evaluator: a.evaluator,
            subject: a.subject,
            endorsed: BTreeSet::new(),
            ratings: BTreeMap::new(),
            warnings: Vec::new(),
        };
        for r in &p.suitable_roles {
            match normalize_task(r, tasks) {
                Some(t) => {
                    out.endorsed.insert(t);
                }
                None => out.warnings.push(format!("unknown task {r:?}")),
            }
        }
        for (t, v) in &p.ratings {
            match normalize_task(t, tasks) {
                Some(t) => {
                    let v = clamp_rating(*v, &mut out.warnings, &t);
                    out.ratings.insert(t, v);
                }
                None => out.warnings.push(format!("unknown task {t:?}")),
            }
        }
        Ok(out)
    }
}

impl AssessmentParser for LlmParser {
    fn kind(&self) -> &'static str {
        "llm_http"
    }

    fn parse(&self, a: &PeerAssessment, tasks: &[TaskId]) -> Result<ParsedAssessment, String> {
        let list: Vec<&str> = tasks.iter().map(|t| t.as_str()).collect();
        let prompt = PARSER.render(&[
            ("subject", &a.subject.to_string()),
            ("evaluator", &a.evaluator.to_string()),
            ("task_list", &list.join(", ")),
            ("text", &a.text),
        ]);
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut last = String::new();
        for _ in 0..2 {
            let reply = self
                .client
                .chat(messages.clone())
                .map_err(|e| e.to_string())?;
            match self.decode(&reply, a, tasks) {
                Ok(p) => return Ok(p),
                Err(e) => {
                    last = e.clone();
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "That did not match the schema ({e}). Output only the JSON object."
                    )));
                }
            }
        }
        Err(format!("schema violation after re-ask: {last}"))
    }
}

pub fn build_parser(
    spec: &ParserSpec,
    retry: RetryPolicy,
    trace: &crate::agents::TraceBuffer,
) -> Result<Box<dyn AssessmentParser>, LlmError> {
    Ok(match spec {
        ParserSpec::RuleBased => Box::new(RuleParser),
        ParserSpec::LlmHttp(s) => {
            Box::new(LlmParser::new(LlmClient::new(s, retry, trace.clone())?))
        }
    })
}

/// Asks every evaluator about every other agent. `visible` gives each
/// evaluator's visible history. Failed backends yield an empty assessment
/// with `failed` set; fatal backend errors abort.
pub fn collect_assessments<F>(
    n_agents: u32,
    episode: u32,
    backends: &[Arc<dyn AgentBackend>],
    visible: F,
) -> Result<Vec<PeerAssessment>, BackendError>
where
    F: Fn(AgentId) -> Vec<Event> + Sync,
{
    let views: Vec<Vec<Event>> = AgentId::all(n_agents).map(&visible).collect();
    let pairs: Vec<(AgentId, AgentId)> = AgentId::all(n_agents)
        .flat_map(|i| {
            AgentId::all(n_agents)
                .filter(move |j| *j != i)
                .map(move |j| (i, j))
        })
        .collect();
    let results: Vec<Result<PeerAssessment, BackendError>> = pairs
        .par_iter()
        .map(|(i, j)| {
            let req = AssessmentRequest {
                evaluator: *i,
                subject: *j,
                episode,
                visible_events: views[(i.0 - 1) as usize].clone(),
            };
            match backends[(i.0 - 1) as usize].assess(&req) {
                Ok(text) => Ok(PeerAssessment {
                    evaluator: *i,
                    subject: *j,
                    text,
                    failed: false,
                }),
                Err(e) if e.is_fatal() => Err(e),
                Err(e) => {
                    log::warn!("assessment of {j} by {i} failed: {e}");
                    Ok(PeerAssessment {
                        evaluator: *i,
                        subject: *j,
                        text: String::new(),
                        failed: true,
                    })
                }
            }
        })
        .collect();
    results.into_iter().collect()
}

/// Parses every non-failed assessment and builds the round's mappings.
/// Mappings hold the union of endorsements and the rounded mean rating per
/// (agent, task) over evaluators.
pub fn parse_assessments(
    parser: &dyn AssessmentParser,
    assessments: &[PeerAssessment],
    tasks: &[TaskId],
) -> Result<(Vec<ParsedAssessment>, RoleMappings, Vec<String>), EvalError> {
    if assessments.is_empty() {
        return Err(EvalError::NoAssessments);
    }
    let results: Vec<Result<ParsedAssessment, EvalError>> = assessments
        .par_iter()
        .filter(|a| !a.failed)
        .map(|a| {
            parser.parse(a, tasks).map_err(|why| EvalError::Parse {
                evaluator: a.evaluator,
                subject: a.subject,
                why,
            })
        })
        .collect();
    let mut parsed = Vec::new();
    let mut issues = Vec::new();
    for r in results {
        match r {
            Ok(p) => {
                issues.extend(
                    p.warnings
                        .iter()
                        .map(|w| format!("{} on {}: {w}", p.evaluator, p.subject)),
                );
                parsed.push(p);
            }
            Err(e) => {
                log::warn!("{e}");
                issues.push(e.to_string());
            }
        }
    }
    for a in assessments.iter().filter(|a| a.failed) {
        issues.push(format!(
            "assessment of {} by {} failed",
            a.subject, a.evaluator
        ));
    }
    let mappings = mappings_from(&parsed);
    Ok((parsed, mappings, issues))
}

pub fn mappings_from(parsed: &[ParsedAssessment]) -> RoleMappings {
    let endorsements = parsed
        .iter()
        .flat_map(|p| p.endorsed.iter().map(move |t| (p.subject, t.clone())));
    let mut sums: BTreeMap<AgentId, BTreeMap<TaskId, (u32, u32)>> = BTreeMap::new();
    for p in parsed {
        for (t, r) in &p.ratings {
            let e = sums
                .entry(p.subject)
                .or_default()
                .entry(t.clone())
                .or_default();
            e.0 += *r as u32;
            e.1 += 1;
        }
    }
    let ratings = sums
        .into_iter()
        .map(|(a, row)| {
            let row = row
                .into_iter()
                .map(|(t, (s, n))| (t, ((s as f64 / n as f64).round() as u8).clamp(1, 10)))
                .collect();
            (a, row)
        })
        .collect();
    RoleMappings::from_endorsements(endorsements, ratings)
}

/// Collects, parses and packages one evaluation round.
pub fn evaluation_round<F>(
    kind: RoundKind,
    n_agents: u32,
    episode: u32,
    tasks: &[TaskId],
    backends: &[Arc<dyn AgentBackend>],
    parser: &dyn AssessmentParser,
    visible: F,
) -> Result<EvaluationRound, BackendError>
where
    F: Fn(AgentId) -> Vec<Event> + Sync,
{
    let assessments = collect_assessments(n_agents, episode, backends, visible)?;
    let (parsed, mappings, issues) = match parse_assessments(parser, &assessments, tasks) {
        Ok(x) => x,
        Err(e) => (Vec::new(), RoleMappings::default(), vec![e.to_string()]),
    };
    Ok(EvaluationRound {
        kind,
        phase_end_episode: episode,
        tasks: tasks.to_vec(),
        valid: !parsed.is_empty(),
        assessments,
        parsed,
        mappings,
        issues,
    })
}

/// Person-job association scores: fraction of parsed assessments of each
/// subject that endorse each task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub tasks: Vec<TaskId>,
    pub rows: BTreeMap<AgentId, Vec<f64>>,
    /// Number of assessments behind each row.
    pub counts: BTreeMap<AgentId, usize>,
    pub across_runs: bool,
    /// Run identifiers that contributed.
    pub provenance: Vec<String>,
}

impl AssociationMatrix {
    pub fn entry(&self, agent: AgentId, task: &TaskId) -> Option<f64> {
        let i = self.tasks.iter().position(|t| t == task)?;
        self.rows.get(&agent).map(|r| r[i])
    }

    pub fn max_entry(&self) -> f64 {
        self.rows.values().flatten().copied().fold(0.0, f64::max)
    }

    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.values().flatten().copied()
    }
}

/// Pools the parsed assessments of `rounds`, each tagged with its run id.
/// Within-run mode requires a single run id.
pub fn association_matrix(
    rounds: &[(&str, &EvaluationRound)],
    across_runs: bool,
) -> Result<AssociationMatrix, EvalError> {
    let valid: Vec<&(&str, &EvaluationRound)> = rounds.iter().filter(|(_, r)| r.valid).collect();
    let Some((_, first)) = valid.first() else {
        return Err(EvalError::NoValidRounds);
    };
    let tasks = first.tasks.clone();
    let provenance: BTreeSet<String> = valid.iter().map(|(id, _)| id.to_string()).collect();
    if !across_runs && provenance.len() > 1 {
        return Err(EvalError::Parse {
            evaluator: AgentId(0),
            subject: AgentId(0),
            why: format!("within-run matrix given {} runs", provenance.len()),
        });
    }
    let parsed = valid.iter().flat_map(|(_, r)| r.parsed.iter());
    let (rows, counts) = endorsement_rows(parsed, &tasks);
    Ok(AssociationMatrix {
        tasks,
        rows,
        counts,
        across_runs,
        provenance: provenance.into_iter().collect(),
    })
}

/// Endorsement fractions per subject over `parsed`.
pub fn endorsement_rows<'a>(
    parsed: impl Iterator<Item = &'a ParsedAssessment>,
    tasks: &[TaskId],
) -> (BTreeMap<AgentId, Vec<f64>>, BTreeMap<AgentId, usize>) {
    let mut hits: BTreeMap<AgentId, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<AgentId, usize> = BTreeMap::new();
    for p in parsed {
        let row = hits
            .entry(p.subject)
            .or_insert_with(|| vec![0.0; tasks.len()]);
        for (i, t) in tasks.iter().enumerate() {
            if p.endorsed.contains(t) {
                row[i] += 1.0;
            }
        }
        *counts.entry(p.subject).or_default() += 1;
    }
    for (a, row) in hits.iter_mut() {
        let n = counts[a] as f64;
        row.iter_mut().for_each(|x| *x /= n);
    }
    (hits, counts)
}
