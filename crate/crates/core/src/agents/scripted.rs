//! Deterministic scripted policies.
//!
//! Each policy is a pure function of its policy seed and the observation:
//! randomness comes from a generator seeded by `(policy seed, episode, purpose)`
//! and beliefs are rebuilt from the visible events on every call.
//!
//! | kind | messages | assessments |
//! |------|----------|-------------|
//! | silent | none | plain evidence counts |
//! | uniform random | one random tagged message with probability 1/2 | one random endorsed role, uniform ratings |
//! | confirmation bias (β) | praise that reinforces each peer's association | confirmation-weighted beliefs |
//! | halo (β) | praise that generalizes successes to other roles | halo-weighted beliefs |
//!
//! Confirmation-bias messages, per peer `j` with an outcome this episode (in
//! AgentId order, at most [`MESSAGE_BUDGET`]):
//! * `j` succeeded at `t`: with probability β, and if `j` is associated with
//!   a different role `a`, praise `j` as `a`; otherwise praise `j` as `t`.
//! * `j` failed and is associated with `a`: with probability β, praise `j`
//!   as `a` anyway; otherwise say nothing.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::beliefs::{BeliefModel, Beliefs};
use super::{
    AgentAction, AgentBackend, AssessmentRequest, Observation, OutgoingMessage, Reaction, RunInfo,
    MESSAGE_BUDGET,
};
use crate::config::BackendSpec;
use crate::error::BackendError;
use crate::rng::decision_rng;
use crate::types::{
    AgentId, Channel, Event, EventPayload, Outcome, Polarity, SentimentTag, TaskId,
};

const PURPOSE_ACT: u64 = 0x41_4354;
const PURPOSE_ASSESS: u64 = 0x41_5353;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Silent,
    UniformRandom,
    ConfirmationBias { beta: f64 },
    Halo { beta: f64 },
}

impl Policy {
    pub fn from_spec(spec: &BackendSpec) -> Option<Self> {
        Some(match spec {
            BackendSpec::ScriptedSilent => Policy::Silent,
            BackendSpec::ScriptedUniformRandom => Policy::UniformRandom,
            BackendSpec::ScriptedConfirmationBias { beta } => {
                Policy::ConfirmationBias { beta: *beta }
            }
            BackendSpec::ScriptedHalo { beta } => Policy::Halo { beta: *beta },
            BackendSpec::LlmHttp(_) => return None,
        })
    }

    fn belief_model(self) -> BeliefModel {
        match self {
            Policy::ConfirmationBias { beta } => BeliefModel::Confirmation { beta },
            Policy::Halo { beta } => BeliefModel::Halo { beta },
            _ => BeliefModel::neutral(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    agent: AgentId,
    policy: Policy,
    seed: u64,
    info: Arc<RunInfo>,
}

impl ScriptedAgent {
    /// # Panics
    /// If `spec` is not a scripted kind.
    pub fn new(agent: AgentId, spec: &BackendSpec, seed: u64, info: Arc<RunInfo>) -> Self {
        let policy = Policy::from_spec(spec).expect("scripted backend spec");
        ScriptedAgent {
            agent,
            policy,
            seed,
            info,
        }
    }

    pub fn with_policy(agent: AgentId, policy: Policy, seed: u64, info: Arc<RunInfo>) -> Self {
        ScriptedAgent {
            agent,
            policy,
            seed,
            info,
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    fn beliefs(&self, events: &[Event]) -> Beliefs {
        Beliefs::replay(
            self.policy.belief_model(),
            events,
            &self.info.task_ids(),
            self.info.n_agents,
        )
    }

    fn peers(&self) -> impl Iterator<Item = AgentId> + '_ {
        AgentId::all(self.info.n_agents).filter(move |a| *a != self.agent)
    }

    fn act(&self, obs: &Observation) -> AgentAction {
        let mut rng = decision_rng(&[self.seed, obs.episode as u64, PURPOSE_ACT]);
        match self.policy {
            Policy::Silent => AgentAction::silent(""),
            Policy::UniformRandom => self.act_random(&mut rng),
            Policy::ConfirmationBias { beta } => self.act_confirmation(obs, beta, &mut rng),
            Policy::Halo { beta } => self.act_halo(obs, beta, &mut rng),
        }
    }

    fn act_random(&self, rng: &mut ChaCha8Rng) -> AgentAction {
        if !rng.random_bool(0.5) {
            return AgentAction::silent("nothing to add");
        }
        let peers: Vec<AgentId> = self.peers().collect();
        let subject = *peers.choose(rng).expect("at least one peer");
        let role = self
            .info
            .tasks
            .choose(rng)
            .expect("non-empty task set")
            .id
            .clone();
        let polarity = if rng.random_bool(0.5) {
            Polarity::Praise
        } else {
            Polarity::Criticism
        };
        let n = self.info.n_agents;
        let channel = match rng.random_range(0..3) {
            0 => Channel::Bilateral {
                to: *peers.choose(rng).expect("at least one peer"),
            },
            1 if n >= 3 => {
                let k = rng.random_range(2..n) as usize;
                let mut participants: std::collections::BTreeSet<AgentId> =
                    peers.choose_multiple(rng, k - 1).copied().collect();
                participants.insert(self.agent);
                Channel::Group { participants }
            }
            _ => Channel::Global,
        };
        let tag = SentimentTag {
            polarity,
            subject,
            role,
        };
        AgentAction {
            thought: "random remark".into(),
            messages: vec![OutgoingMessage {
                channel,
                body: message_body(&tag, None),
                tag: Some(tag),
            }],
        }
    }

    fn act_confirmation(&self, obs: &Observation, beta: f64, rng: &mut ChaCha8Rng) -> AgentAction {
        let beliefs = self.beliefs(&obs.visible_events);
        let outcomes = current_outcomes(obs);
        let mut messages = Vec::new();
        let mut notes = Vec::new();
        for peer in self.peers() {
            if messages.len() >= MESSAGE_BUDGET {
                break;
            }
            let Some((task, outcome)) = outcomes
                .iter()
                .find(|(a, ..)| *a == peer)
                .map(|(_, t, o)| (*t, *o))
            else {
                continue;
            };
            let assoc = beliefs.association_task(peer);
            if let Some(a) = assoc {
                notes.push(format!("{peer} -> {a}"));
            }
            let draw = rng.random::<f64>();
            let role = match (outcome, assoc) {
                (Outcome::Success, Some(a)) if a != task && draw < beta => a.clone(),
                (Outcome::Success, _) => task.clone(),
                (Outcome::Failure, Some(a)) if draw < beta => a.clone(),
                (Outcome::Failure, _) => continue,
            };
            messages.push(praise(peer, role, task));
        }
        AgentAction {
            thought: if notes.is_empty() {
                "no settled views yet".into()
            } else {
                format!("current views: {}", notes.join(", "))
            },
            messages,
        }
    }

    fn act_halo(&self, obs: &Observation, beta: f64, rng: &mut ChaCha8Rng) -> AgentAction {
        let outcomes = current_outcomes(obs);
        let mut messages = Vec::new();
        for peer in self.peers() {
            if messages.len() >= MESSAGE_BUDGET {
                break;
            }
            let Some((task, Outcome::Success)) = outcomes
                .iter()
                .find(|(a, ..)| *a == peer)
                .map(|(_, t, o)| (*t, *o))
            else {
                continue;
            };
            let generalize = rng.random::<f64>() < beta;
            let role = if generalize {
                self.info
                    .tasks
                    .choose(rng)
                    .expect("non-empty task set")
                    .id
                    .clone()
            } else {
                task.clone()
            };
            messages.push(praise(peer, role, task));
        }
        AgentAction {
            thought: "successes speak for themselves".into(),
            messages,
        }
    }

    fn assessment(&self, req: &AssessmentRequest) -> String {
        let tasks = self.info.task_ids();
        let (endorsed, ratings): (Vec<usize>, Vec<u8>) = match self.policy {
            Policy::UniformRandom => {
                let mut rng = decision_rng(&[
                    self.seed,
                    req.episode as u64,
                    req.subject.0 as u64,
                    PURPOSE_ASSESS,
                ]);
                let pick = rng.random_range(0..tasks.len());
                let ratings = tasks.iter().map(|_| rng.random_range(1..=10u8)).collect();
                (vec![pick], ratings)
            }
            _ => {
                let b = self.beliefs(&req.visible_events);
                (b.endorsed(req.subject), b.ratings(req.subject))
            }
        };
        assessment_text(req.subject, &tasks, &endorsed, &ratings)
    }
}

/// Renders an assessment in the line grammar understood by the rule-based parser.
pub fn assessment_text(
    subject: AgentId,
    tasks: &[TaskId],
    endorsed: &[usize],
    ratings: &[u8],
) -> String {
    tasks
        .iter()
        .zip(ratings)
        .enumerate()
        .map(|(i, (t, r))| {
            if endorsed.contains(&i) {
                format!("{subject} is suited to {t}, {r}/10")
            } else {
                format!("{subject} rated {t} {r}/10")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn current_outcomes(obs: &Observation) -> Vec<(AgentId, &TaskId, Outcome)> {
    obs.visible_events
        .iter()
        .filter(|e| e.episode == obs.episode)
        .filter_map(|e| match &e.payload {
            EventPayload::Td {
                agent,
                task,
                outcome,
            } => Some((*agent, task, *outcome)),
            _ => None,
        })
        .collect()
}

fn praise(subject: AgentId, role: TaskId, actual: &TaskId) -> OutgoingMessage {
    let tag = SentimentTag {
        polarity: Polarity::Praise,
        subject,
        role,
    };
    OutgoingMessage {
        channel: Channel::Global,
        body: message_body(&tag, Some(actual)),
        tag: Some(tag),
    }
}

fn message_body(tag: &SentimentTag, actual: Option<&TaskId>) -> String {
    let SentimentTag {
        polarity,
        subject,
        role,
    } = tag;
    match (polarity, actual) {
        (Polarity::Criticism, _) => format!("{subject} does not seem cut out for {role}."),
        (Polarity::Praise, Some(t)) if t == role => format!("Nice work as {role}, {subject}."),
        (Polarity::Praise, _) => format!("{subject} is a natural {role}."),
    }
}

impl AgentBackend for ScriptedAgent {
    fn kind(&self) -> &'static str {
        match self.policy {
            Policy::Silent => "scripted_silent",
            Policy::UniformRandom => "scripted_uniform_random",
            Policy::ConfirmationBias { .. } => "scripted_confirmation_bias",
            Policy::Halo { .. } => "scripted_halo",
        }
    }

    fn react(&self, obs: &Observation) -> Result<Reaction, BackendError> {
        Ok(Reaction {
            action: self.act(obs),
            issues: Vec::new(),
        })
    }

    fn assess(&self, req: &AssessmentRequest) -> Result<String, BackendError> {
        Ok(self.assessment(req))
    }
}
