//! Agent decision backends.
//!
//! Every agent runs one observation -> thought -> action cycle per episode.
//! Scripted backends compute the action directly from a replay of their
//! visible history; LLM backends send a prompt, then hand the completion to
//! the fc_caller, which turns it into an [`AgentAction`].

pub mod beliefs;
pub mod fc;
pub mod live;
pub mod llm;
pub mod prompt;
pub mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{BackendSpec, SimConfig};
use crate::error::{BackendError, LlmError};
use crate::types::{AgentId, AgentProfile, Event, Outcome, SentimentTag, TaskId, TaskType};

pub use live::LlmAgent;
pub use llm::{LlmClient, TraceBuffer, TraceEntry};
pub use scripted::ScriptedAgent;

/// Maximum number of messages in one action.
pub const MESSAGE_BUDGET: usize = 3;

/// Static facts about a run that every backend may read.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub n_agents: u32,
    pub tasks: Vec<TaskType>,
    pub profiles: Vec<AgentProfile>,
    pub seed: u64,
}

impl RunInfo {
    pub fn from_config(config: &SimConfig) -> Self {
        RunInfo {
            n_agents: config.n_agents,
            tasks: config.tasks.clone(),
            profiles: config.agent_profiles(),
            seed: config.seed,
        }
    }

    pub fn display_name(&self, agent: AgentId) -> String {
        self.profiles
            .get(agent.0.wrapping_sub(1) as usize)
            .map(|p| p.display_name.clone())
            .unwrap_or_else(|| agent.neutral_name())
    }

    pub fn task_ids(&self) -> Vec<TaskId> {
        self.tasks.iter().map(|t| t.id.clone()).collect()
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskType> {
        self.tasks.iter().find(|t| &t.id == id)
    }
}

/// What an agent sees when it acts.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub agent: AgentId,
    pub episode: u32,
    pub visible_events: Vec<Event>,
    pub own_assignment: TaskId,
    pub own_outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutgoingMessage {
    pub channel: crate::types::Channel,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<SentimentTag>,
}

/// Result of one decision cycle.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentAction {
    pub thought: String,
    pub messages: Vec<OutgoingMessage>,
}

impl AgentAction {
    pub fn silent(thought: impl Into<String>) -> Self {
        AgentAction {
            thought: thought.into(),
            messages: Vec::new(),
        }
    }

    /// Drops messages that break a channel rule or exceed the budget.
    /// Returns one issue string per dropped message.
    pub fn sanitize(&mut self, sender: AgentId, n_agents: u32) -> Vec<String> {
        let mut issues = Vec::new();
        let mut kept = Vec::new();
        for m in self.messages.drain(..) {
            if let Err(e) = m.channel.validate(sender, n_agents) {
                issues.push(format!("dropped message: {e}"));
            } else if kept.len() >= MESSAGE_BUDGET {
                issues.push(format!(
                    "dropped message over the {MESSAGE_BUDGET}-message budget"
                ));
            } else {
                kept.push(m);
            }
        }
        self.messages = kept;
        issues
    }
}

/// An action plus anything the interpreter had to drop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reaction {
    pub action: AgentAction,
    pub issues: Vec<String>,
}

/// Prompt P(a_i, a_j) inputs for one peer assessment.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRequest {
    pub evaluator: AgentId,
    pub subject: AgentId,
    /// Last episode of the evaluated phase.
    pub episode: u32,
    pub visible_events: Vec<Event>,
}

/// A player agent's decision backend. Implementations hold no per-run
/// mutable state, so one instance may serve concurrent calls.
pub trait AgentBackend: Send + Sync {
    fn kind(&self) -> &'static str;

    fn react(&self, obs: &Observation) -> Result<Reaction, BackendError>;

    /// Free-text assessment `q_ij`.
    fn assess(&self, req: &AssessmentRequest) -> Result<String, BackendError>;

    /// System prompt, for backends that use one.
    fn system_prompt(&self) -> Option<&str> {
        None
    }
}

/// Runs one decision cycle and enforces the channel rules and budget on
/// whatever the backend produced.
pub fn react_cycle(
    backend: &dyn AgentBackend,
    obs: &Observation,
    n_agents: u32,
) -> Result<Reaction, BackendError> {
    let mut r = backend.react(obs)?;
    let extra = r.action.sanitize(obs.agent, n_agents);
    r.issues.extend(extra);
    Ok(r)
}

/// Instantiates one backend per agent. LLM clients of a run share `trace`.
pub fn build_backends(
    config: &SimConfig,
    trace: &TraceBuffer,
) -> Result<Vec<Arc<dyn AgentBackend>>, LlmError> {
    let info = Arc::new(RunInfo::from_config(config));
    config
        .agents()
        .map(|a| -> Result<Arc<dyn AgentBackend>, LlmError> {
            let seed = crate::rng::policy_seed(config.seed, a.0);
            let spec = config.backend_for(a);
            Ok(match spec {
                BackendSpec::LlmHttp(llm) => {
                    let client = LlmClient::new(llm, config.retry, trace.clone())?;
                    Arc::new(LlmAgent::new(a, info.clone(), client, llm.fc_caller))
                }
                _ => Arc::new(ScriptedAgent::new(a, spec, seed, info.clone())),
            })
        })
        .collect()
}
