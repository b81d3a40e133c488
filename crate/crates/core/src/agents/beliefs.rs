//! Belief replay used by the scripted policies.
//!
//! An observer keeps, for every other agent, a score per task. Scores start
//! at a uniform prior and move with observed evidence: a visible success of
//! `j` at `t` is +1 for `(j, t)`, a tagged praise message is +1 and a tagged
//! criticism -1. How evidence is weighted depends on the bias model:
//!
//! * **confirmation** (strength `beta`): evidence consistent with `j`'s
//!   current association (the unique highest-scoring task) counts fully;
//!   inconsistent evidence counts `1 - beta`.
//! * **halo** (strength `beta`): positive evidence for `(j, t)` also adds
//!   `beta` times that amount to every other task of `j`.
//!
//! With `beta = 0` both reduce to plain evidence counting.

use std::collections::BTreeMap;

use crate::types::{AgentId, Event, EventPayload, Polarity, TaskId};

/// Score every task starts with before any evidence.
pub const PRIOR: f64 = 1.0;
/// A task is endorsed when its score reaches this fraction of the top score.
pub const ENDORSE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeliefModel {
    Confirmation { beta: f64 },
    Halo { beta: f64 },
}

impl BeliefModel {
    pub fn neutral() -> Self {
        BeliefModel::Confirmation { beta: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    tasks: Vec<TaskId>,
    scores: BTreeMap<AgentId, Vec<f64>>,
}

impl Beliefs {
    pub fn new(tasks: &[TaskId], n_agents: u32) -> Self {
        Beliefs {
            tasks: tasks.to_vec(),
            scores: AgentId::all(n_agents)
                .map(|a| (a, vec![PRIOR; tasks.len()]))
                .collect(),
        }
    }

    /// Replays `events` in order under `model`.
    pub fn replay(model: BeliefModel, events: &[Event], tasks: &[TaskId], n_agents: u32) -> Self {
        let mut b = Beliefs::new(tasks, n_agents);
        for e in events {
            match &e.payload {
                EventPayload::Td {
                    agent,
                    task,
                    outcome,
                } if outcome.is_success() => b.observe(model, *agent, task, 1.0),
                EventPayload::Im {
                    sender,
                    tag: Some(tag),
                    ..
                } if tag.subject != *sender => {
                    let e = match tag.polarity {
                        Polarity::Praise => 1.0,
                        Polarity::Criticism => -1.0,
                    };
                    b.observe(model, tag.subject, &tag.role, e);
                }
                _ => {}
            }
        }
        b
    }

    fn observe(&mut self, model: BeliefModel, agent: AgentId, task: &TaskId, evidence: f64) {
        let Some(t) = self.tasks.iter().position(|x| x == task) else {
            return;
        };
        let assoc = self.association(agent);
        let Some(row) = self.scores.get_mut(&agent) else {
            return;
        };
        match model {
            BeliefModel::Confirmation { beta } => {
                let confirming = if evidence > 0.0 {
                    assoc.is_none_or(|a| a == t)
                } else {
                    assoc.is_some_and(|a| a != t)
                };
                let w = if confirming || assoc.is_none() {
                    1.0
                } else {
                    1.0 - beta
                };
                row[t] += w * evidence;
            }
            BeliefModel::Halo { beta } => {
                row[t] += evidence;
                if evidence > 0.0 {
                    for (i, s) in row.iter_mut().enumerate() {
                        if i != t {
                            *s += beta * evidence;
                        }
                    }
                }
            }
        }
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn scores(&self, agent: AgentId) -> &[f64] {
        self.scores.get(&agent).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Index of the unique highest-scoring task, if there is one.
    pub fn association(&self, agent: AgentId) -> Option<usize> {
        let row = self.scores.get(&agent)?;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut top = row.iter().enumerate().filter(|(_, s)| **s == max);
        let (i, _) = top.next()?;
        top.next().is_none().then_some(i)
    }

    pub fn association_task(&self, agent: AgentId) -> Option<&TaskId> {
        self.association(agent).map(|i| &self.tasks[i])
    }

    /// Tasks scoring at least [`ENDORSE_FRACTION`] of the (positive) maximum.
    pub fn endorsed(&self, agent: AgentId) -> Vec<usize> {
        let row = self.scores(agent);
        let max = row.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        row.iter()
            .enumerate()
            .filter(|(_, s)| **s > 0.0 && **s >= ENDORSE_FRACTION * max)
            .map(|(i, _)| i)
            .collect()
    }

    /// 1..=10 suitability ratings from each task's share of positive score:
    /// an even split maps to the scale midpoint, full concentration to 10.
    pub fn ratings(&self, agent: AgentId) -> Vec<u8> {
        let row = self.scores(agent);
        let n = row.len();
        if n == 1 {
            return vec![10];
        }
        let total: f64 = row.iter().map(|s| s.max(0.0)).sum();
        row.iter()
            .map(|s| {
                let share = if total > 0.0 {
                    s.max(0.0) / total
                } else {
                    1.0 / n as f64
                };
                let r = 5.5 + 4.5 * (n as f64 * share - 1.0) / (n as f64 - 1.0);
                r.round().clamp(1.0, 10.0) as u8
            })
            .collect()
    }
}
