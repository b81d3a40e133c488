//! Boss agent for the hierarchical phase: history in, total assignment out.
//!
//! Scripted bosses:
//! * `repeat_last_success` gives each agent the task it most recently
//!   succeeded at; agents without a success get a uniform draw.
//! * `success_rate_greedy` gives each agent the task it has succeeded at most
//!   often (ties to the smaller task id); agents without a success get a
//!   uniform draw.
//! * `uniform_random` draws every task uniformly (control).
//!
//! Uniform draws come from the run's supervisor stream in AgentId order.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::llm::{ChatMessage, LlmClient};
use crate::agents::prompt::BOSS;
use crate::agents::RunInfo;
use crate::config::{BossSpec, RetryPolicy};
use crate::error::{AssignmentError, BackendError, LlmError};
use crate::types::{AgentId, Assignment, EpisodeRecord, TaskId, TaskType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisorDecision {
    pub episode: u32,
    pub assignment: Assignment,
    pub rationale: String,
    /// The boss failed and the assignment was drawn at random instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

pub trait Boss: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Proposes `(agent, task)` pairs and a rationale. The pairs are
    /// validated by the caller.
    fn decide(
        &self,
        history: &[EpisodeRecord],
        info: &RunInfo,
        episode: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<(AgentId, TaskId)>, String), BackendError>;
}

fn uniform_task(tasks: &[TaskType], rng: &mut ChaCha8Rng) -> TaskId {
    tasks.choose(rng).expect("non-empty task set").id.clone()
}

/// Most recent successful task per agent.
pub fn last_successes(history: &[EpisodeRecord]) -> BTreeMap<AgentId, TaskId> {
    let mut out = BTreeMap::new();
    for rec in history {
        for (agent, task, outcome) in rec.td_events() {
            if outcome.is_success() {
                out.insert(agent, task.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RepeatLastSuccess;

impl Boss for RepeatLastSuccess {
    fn kind(&self) -> &'static str {
        "repeat_last_success"
    }

    fn decide(
        &self,
        history: &[EpisodeRecord],
        info: &RunInfo,
        _episode: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<(AgentId, TaskId)>, String), BackendError> {
        let last = last_successes(history);
        let mut drawn = Vec::new();
        let pairs = AgentId::all(info.n_agents)
            .map(|a| match last.get(&a) {
                Some(t) => (a, t.clone()),
                None => {
                    drawn.push(a.to_string());
                    (a, uniform_task(&info.tasks, rng))
                }
            })
            .collect();
        let mut why = "each participant repeats the task of their latest success".to_string();
        if !drawn.is_empty() {
            why.push_str(&format!(
                "; no success yet for {}, assigned at random",
                drawn.join(", ")
            ));
        }
        Ok((pairs, why))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SuccessRateGreedy;

impl Boss for SuccessRateGreedy {
    fn kind(&self) -> &'static str {
        "success_rate_greedy"
    }

    fn decide(
        &self,
        history: &[EpisodeRecord],
        info: &RunInfo,
        _episode: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<(AgentId, TaskId)>, String), BackendError> {
        let mut wins: BTreeMap<AgentId, BTreeMap<&TaskId, u32>> = BTreeMap::new();
        for rec in history {
            for (agent, task, outcome) in rec.td_events() {
                if outcome.is_success() {
                    *wins.entry(agent).or_default().entry(task).or_default() += 1;
                }
            }
        }
        let pairs = AgentId::all(info.n_agents)
            .map(|a| {
                // max_by_key keeps the last maximum; reversed, that is the smallest id
                let best = wins.get(&a).and_then(|m| {
                    m.iter()
                        .rev()
                        .max_by_key(|(_, c)| **c)
                        .map(|(t, _)| (*t).clone())
                });
                (a, best.unwrap_or_else(|| uniform_task(&info.tasks, rng)))
            })
            .collect();
        Ok((
            pairs,
            "each participant gets the task they succeeded at most often".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandomBoss;

impl Boss for UniformRandomBoss {
    fn kind(&self) -> &'static str {
        "uniform_random"
    }

    fn decide(
        &self,
        _history: &[EpisodeRecord],
        info: &RunInfo,
        _episode: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<(AgentId, TaskId)>, String), BackendError> {
        let pairs = AgentId::all(info.n_agents)
            .map(|a| (a, uniform_task(&info.tasks, rng)))
            .collect();
        Ok((pairs, "tasks drawn at random".into()))
    }
}

/// Boss backed by a chat model. The reply must contain one `person_k: task`
/// line per participant and a `RATIONALE:` line; one re-ask on failure.
pub struct LlmBoss {
    client: LlmClient,
}

impl LlmBoss {
    pub fn new(client: LlmClient) -> Self {
        LlmBoss { client }
    }
}

/// Parses a boss reply into pairs and rationale.
pub fn parse_boss_reply(
    text: &str,
    info: &RunInfo,
) -> Result<(Vec<(AgentId, TaskId)>, String), String> {
    let line_re = Regex::new(r"^\s*(person_\d+)\s*[:=-]\s*([A-Za-z_ ]+?)\s*$").unwrap();
    let mut pairs = Vec::new();
    let mut rationale = String::new();
    for line in text.lines() {
        if let Some(r) = line.trim().strip_prefix("RATIONALE:") {
            rationale = r.trim().to_string();
        } else if let Some(c) = line_re.captures(line) {
            let agent: AgentId = c[1]
                .parse()
                .map_err(|e: crate::error::TypeError| e.to_string())?;
            pairs.push((
                agent,
                TaskId::new(c[2].trim().replace(' ', "_").to_lowercase()),
            ));
        }
    }
    validate_pairs(&pairs, info.n_agents, &info.tasks).map_err(|e| e.to_string())?;
    Ok((pairs, rationale))
}

impl Boss for LlmBoss {
    fn kind(&self) -> &'static str {
        "llm_http"
    }

    fn decide(
        &self,
        history: &[EpisodeRecord],
        info: &RunInfo,
        episode: u32,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<(AgentId, TaskId)>, String), BackendError> {
        let history_json: Vec<String> = history
            .iter()
            .flat_map(|r| r.events.iter())
            .map(|e| serde_json::to_string(e).expect("event encodes"))
            .collect();
        let roster: Vec<String> = AgentId::all(info.n_agents).map(|a| a.to_string()).collect();
        let tasks: Vec<&str> = info.tasks.iter().map(|t| t.id.as_str()).collect();
        let prompt = BOSS.render(&[
            ("episode", &episode.to_string()),
            ("n_agents", &info.n_agents.to_string()),
            ("roster", &roster.join(", ")),
            ("task_list", &tasks.join(", ")),
            ("history_json", &history_json.join("\n")),
        ]);
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut last = String::new();
        for _ in 0..2 {
            let reply = self.client.chat(messages.clone())?;
            match parse_boss_reply(&reply, info) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    last = e.clone();
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Invalid assignment ({e}). Reply again with one \"person_k: <task>\" line per participant and a RATIONALE line."
                    )));
                }
            }
        }
        Err(BackendError::Unparseable(last))
    }
}

pub fn build_boss(
    spec: &BossSpec,
    retry: RetryPolicy,
    trace: &crate::agents::TraceBuffer,
) -> Result<Box<dyn Boss>, LlmError> {
    Ok(match spec {
        BossSpec::RepeatLastSuccess => Box::new(RepeatLastSuccess),
        BossSpec::SuccessRateGreedy => Box::new(SuccessRateGreedy),
        BossSpec::UniformRandom => Box::new(UniformRandomBoss),
        BossSpec::LlmHttp(s) => Box::new(LlmBoss::new(LlmClient::new(s, retry, trace.clone())?)),
    })
}

/// Checks totality over agents `1..=n_agents` and task membership.
pub fn validate_pairs(
    pairs: &[(AgentId, TaskId)],
    n_agents: u32,
    tasks: &[TaskType],
) -> Result<(), AssignmentError> {
    let mut seen = BTreeSet::new();
    for (a, t) in pairs {
        if a.0 == 0 || a.0 > n_agents {
            return Err(AssignmentError::UnknownAgent(*a));
        }
        if !seen.insert(*a) {
            return Err(AssignmentError::DuplicateAgent(*a));
        }
        if !tasks.iter().any(|x| &x.id == t) {
            return Err(AssignmentError::UnknownTask(t.clone()));
        }
    }
    if let Some(missing) = AgentId::all(n_agents).find(|a| !seen.contains(a)) {
        return Err(AssignmentError::MissingAgent(missing));
    }
    Ok(())
}

pub fn validate_assignment(
    assignment: &Assignment,
    n_agents: u32,
    tasks: &[TaskType],
) -> Result<(), AssignmentError> {
    let pairs: Vec<(AgentId, TaskId)> = assignment
        .pairs
        .iter()
        .map(|(a, t)| (*a, t.clone()))
        .collect();
    validate_pairs(&pairs, n_agents, tasks)
}

/// Asks the boss for a decision. A boss failure other than a fatal one, or
/// an invalid assignment, falls back to `fallback` with `degraded` set.
pub fn supervisor_assign(
    history: &[EpisodeRecord],
    info: &RunInfo,
    episode: u32,
    boss: &dyn Boss,
    rng: &mut ChaCha8Rng,
    fallback: impl FnOnce() -> Assignment,
) -> Result<SupervisorDecision, BackendError> {
    let degraded = |why: String| SupervisorDecision {
        episode,
        assignment: fallback(),
        rationale: format!("supervisor unavailable ({why}); tasks assigned at random"),
        degraded: true,
    };
    match boss.decide(history, info, episode, rng) {
        Ok((pairs, rationale)) => match validate_pairs(&pairs, info.n_agents, &info.tasks) {
            Ok(()) => Ok(SupervisorDecision {
                episode,
                assignment: pairs.into_iter().collect(),
                rationale,
                degraded: false,
            }),
            Err(e) => Ok(degraded(e.to_string())),
        },
        Err(e) if e.is_fatal() => Err(e),
        Err(e) => Ok(degraded(e.to_string())),
    }
}
