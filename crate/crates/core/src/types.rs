//! Domain types shared by the engine, agents, evaluation and metrics.
//!
//! Everything here is a plain immutable value with a canonical serde form;
//! the NDJSON run log is built directly from these encodings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TypeError;

/// Numeric agent identifier. Indices run `1..=n` inside a run and their
/// numeric order is the global tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> u32 {
        self.0
    }

    /// The neutral identifier, `person_{index}`.
    pub fn neutral_name(self) -> String {
        format!("person_{}", self.0)
    }

    /// All ids of a run with `n` agents, in order.
    pub fn all(n: u32) -> impl Iterator<Item = AgentId> {
        (1..=n).map(AgentId)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "person_{}", self.0)
    }
}

impl FromStr for AgentId {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .trim()
            .strip_prefix("person_")
            .ok_or_else(|| TypeError::BadAgentId(s.to_string()))?;
        match digits.parse::<u32>() {
            Ok(i) if i > 0 => Ok(AgentId(i)),
            _ => Err(TypeError::BadAgentId(s.to_string())),
        }
    }
}

/// Task (job) identifier, e.g. `data_scientist`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn new(id: impl Into<String>) -> Self {
        TaskId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmth {
    Warm,
    Cold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Competence {
    Competent,
    Incompetent,
}

/// A job in warmth x competence space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskType {
    pub id: TaskId,
    pub warmth: Warmth,
    pub competence: Competence,
}

impl TaskType {
    pub fn new(id: &str, warmth: Warmth, competence: Competence) -> Self {
        TaskType {
            id: TaskId::new(id),
            warmth,
            competence,
        }
    }
}

/// The five example jobs covering all four quadrants.
pub fn default_task_set() -> Vec<TaskType> {
    use Competence::*;
    use Warmth::*;
    vec![
        TaskType::new("data_scientist", Warm, Competent),
        TaskType::new("manager", Cold, Competent),
        TaskType::new("rehabilitation_counselor", Warm, Incompetent),
        TaskType::new("janitor", Cold, Incompetent),
        TaskType::new("truck_driver", Cold, Incompetent),
    ]
}

/// One job per quadrant (the default set without `truck_driver`).
pub fn quadrant_task_set() -> Vec<TaskType> {
    default_task_set().into_iter().take(4).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    #[default]
    Neutral,
    Demographic,
}

/// How an agent is presented to the language model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent: AgentId,
    pub mode: ProfileMode,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<String>,
}

impl AgentProfile {
    pub fn neutral(agent: AgentId) -> Self {
        AgentProfile {
            agent,
            mode: ProfileMode::Neutral,
            display_name: agent.neutral_name(),
            age: None,
            gender: None,
            appearance: None,
        }
    }

    pub fn demographic(
        agent: AgentId,
        name: &str,
        age: u32,
        gender: &str,
        appearance: &str,
    ) -> Self {
        AgentProfile {
            agent,
            mode: ProfileMode::Demographic,
            display_name: name.to_string(),
            age: Some(age),
            gender: Some(gender.to_string()),
            appearance: Some(appearance.to_string()),
        }
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        let bad = |why: &str| TypeError::InvalidProfile(self.agent, why.to_string());
        match self.mode {
            ProfileMode::Neutral => {
                if self.age.is_some() || self.gender.is_some() || self.appearance.is_some() {
                    return Err(bad("neutral profile carries demographic fields"));
                }
                if self.display_name != self.agent.neutral_name() {
                    return Err(bad("neutral display name must be person_{index}"));
                }
            }
            ProfileMode::Demographic => {
                let empty = |s: &Option<String>| s.as_deref().is_none_or(|v| v.trim().is_empty());
                if self.age.is_none_or(|a| a == 0) || empty(&self.gender) || empty(&self.appearance)
                {
                    return Err(bad("demographic profile needs age, gender and appearance"));
                }
                if self.display_name.trim().is_empty() {
                    return Err(bad("demographic profile needs a name"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::Success)
    }
}

/// Delivery channel of an interaction message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Channel {
    Bilateral {
        to: AgentId,
    },
    /// Participants include the sender.
    Group {
        participants: BTreeSet<AgentId>,
    },
    Global,
}

impl Channel {
    /// Whether `agent` receives a message sent by `sender` on this channel.
    pub fn reaches(&self, sender: AgentId, agent: AgentId) -> bool {
        if sender == agent {
            return true;
        }
        match self {
            Channel::Bilateral { to } => *to == agent,
            Channel::Group { participants } => participants.contains(&agent),
            Channel::Global => true,
        }
    }

    /// Checks the channel rules for a run with `n_agents` agents.
    pub fn validate(&self, sender: AgentId, n_agents: u32) -> Result<(), TypeError> {
        let known = |a: AgentId| a.0 >= 1 && a.0 <= n_agents;
        match self {
            Channel::Bilateral { to } => {
                if *to == sender {
                    return Err(TypeError::SelfAddressed(sender));
                }
                if !known(*to) {
                    return Err(TypeError::UnknownAgent(*to));
                }
            }
            Channel::Group { participants } => {
                if let Some(a) = participants.iter().find(|a| !known(**a)) {
                    return Err(TypeError::UnknownAgent(*a));
                }
                if !participants.contains(&sender) {
                    return Err(TypeError::GroupSize {
                        size: participants.len(),
                        n_agents,
                    });
                }
                let k = participants.len();
                if k < 2 || k as u32 >= n_agents {
                    return Err(TypeError::GroupSize { size: k, n_agents });
                }
            }
            Channel::Global => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Praise,
    Criticism,
}

/// Structured sentiment carried by scripted messages.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentTag {
    pub polarity: Polarity,
    pub subject: AgentId,
    pub role: TaskId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventPayload {
    /// Task completion record.
    Td {
        agent: AgentId,
        task: TaskId,
        outcome: Outcome,
    },
    /// Interaction message, stamped with the episode it was sent in.
    Im {
        sender: AgentId,
        channel: Channel,
        body: String,
        sent_in: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<SentimentTag>,
    },
    /// System notification.
    Sn { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub episode: u32,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl Event {
    pub fn td(episode: u32, agent: AgentId, task: TaskId, outcome: Outcome) -> Self {
        Event {
            episode,
            payload: EventPayload::Td {
                agent,
                task,
                outcome,
            },
        }
    }

    pub fn sn(episode: u32, text: impl Into<String>) -> Self {
        Event {
            episode,
            payload: EventPayload::Sn { text: text.into() },
        }
    }

    pub fn is_td(&self) -> bool {
        matches!(self.payload, EventPayload::Td { .. })
    }

    pub fn is_sn(&self) -> bool {
        matches!(self.payload, EventPayload::Sn { .. })
    }

    pub fn is_im(&self) -> bool {
        matches!(self.payload, EventPayload::Im { .. })
    }
}

/// One episode's chronological events (`h_k`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u32,
    pub events: Vec<Event>,
}

impl EpisodeRecord {
    pub fn new(index: u32) -> Self {
        EpisodeRecord {
            index,
            events: Vec::new(),
        }
    }

    pub fn td_events(&self) -> impl Iterator<Item = (AgentId, &TaskId, Outcome)> {
        self.events.iter().filter_map(|e| match &e.payload {
            EventPayload::Td {
                agent,
                task,
                outcome,
            } => Some((*agent, task, *outcome)),
            _ => None,
        })
    }
}

/// One task per agent for an episode.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: BTreeMap<AgentId, TaskId>,
}

impl Assignment {
    pub fn task_of(&self, agent: AgentId) -> Option<&TaskId> {
        self.pairs.get(&agent)
    }
}

impl FromIterator<(AgentId, TaskId)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (AgentId, TaskId)>>(iter: I) -> Self {
        Assignment {
            pairs: iter.into_iter().collect(),
        }
    }
}

/// A qualitative assessment `q_ij` of `subject` written by `evaluator`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerAssessment {
    pub evaluator: AgentId,
    pub subject: AgentId,
    pub text: String,
    /// Set when the evaluator backend failed; such pairs carry no ratings.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

/// Parsed agent->roles and role->agents mappings plus aggregated ratings.
///
/// The two directions are always built from the same endorsement set, so
/// `a in role_to_agents[t]` iff `t in agent_to_roles[a]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "RoleMappingsRepr")]
pub struct RoleMappings {
    agent_to_roles: BTreeMap<AgentId, BTreeSet<TaskId>>,
    role_to_agents: BTreeMap<TaskId, BTreeSet<AgentId>>,
    ratings: BTreeMap<AgentId, BTreeMap<TaskId, u8>>,
}

#[derive(Deserialize)]
struct RoleMappingsRepr {
    agent_to_roles: BTreeMap<AgentId, BTreeSet<TaskId>>,
    role_to_agents: BTreeMap<TaskId, BTreeSet<AgentId>>,
    ratings: BTreeMap<AgentId, BTreeMap<TaskId, u8>>,
}

impl TryFrom<RoleMappingsRepr> for RoleMappings {
    type Error = TypeError;

    fn try_from(r: RoleMappingsRepr) -> Result<Self, Self::Error> {
        let m = RoleMappings {
            agent_to_roles: r.agent_to_roles,
            role_to_agents: r.role_to_agents,
            ratings: r.ratings,
        };
        m.check()?;
        Ok(m)
    }
}

impl RoleMappings {
    /// Builds both directions from (agent, role) endorsements; ratings must
    /// already be on the 1..=10 scale.
    pub fn from_endorsements<I>(
        endorsements: I,
        ratings: BTreeMap<AgentId, BTreeMap<TaskId, u8>>,
    ) -> Self
    where
        I: IntoIterator<Item = (AgentId, TaskId)>,
    {
        let mut agent_to_roles: BTreeMap<AgentId, BTreeSet<TaskId>> = BTreeMap::new();
        let mut role_to_agents: BTreeMap<TaskId, BTreeSet<AgentId>> = BTreeMap::new();
        for (agent, role) in endorsements {
            agent_to_roles
                .entry(agent)
                .or_default()
                .insert(role.clone());
            role_to_agents.entry(role).or_default().insert(agent);
        }
        RoleMappings {
            agent_to_roles,
            role_to_agents,
            ratings,
        }
    }

    pub fn agent_to_roles(&self) -> &BTreeMap<AgentId, BTreeSet<TaskId>> {
        &self.agent_to_roles
    }

    pub fn role_to_agents(&self) -> &BTreeMap<TaskId, BTreeSet<AgentId>> {
        &self.role_to_agents
    }

    pub fn ratings(&self) -> &BTreeMap<AgentId, BTreeMap<TaskId, u8>> {
        &self.ratings
    }

    pub fn rating(&self, agent: AgentId, task: &TaskId) -> Option<u8> {
        self.ratings.get(&agent).and_then(|m| m.get(task)).copied()
    }

    pub fn roles_of(&self, agent: AgentId) -> Option<&BTreeSet<TaskId>> {
        self.agent_to_roles.get(&agent)
    }

    pub fn agents_for(&self, role: &TaskId) -> Option<&BTreeSet<AgentId>> {
        self.role_to_agents.get(role)
    }

    /// Checks duality and the rating range.
    pub fn check(&self) -> Result<(), TypeError> {
        for (a, roles) in &self.agent_to_roles {
            for t in roles {
                if !self.role_to_agents.get(t).is_some_and(|s| s.contains(a)) {
                    return Err(TypeError::MappingDuality(*a, t.clone()));
                }
            }
        }
        for (t, agents) in &self.role_to_agents {
            for a in agents {
                if !self.agent_to_roles.get(a).is_some_and(|s| s.contains(t)) {
                    return Err(TypeError::MappingDuality(*a, t.clone()));
                }
            }
        }
        for (a, row) in &self.ratings {
            for (t, r) in row {
                if !(1..=10).contains(r) {
                    return Err(TypeError::RatingRange(*a, t.clone(), *r));
                }
            }
        }
        Ok(())
    }
}

/// Cognitive-bias flags extracted from a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "BiasFlagsRepr", deny_unknown_fields)]
pub struct BiasFlags {
    pub stereotype: bool,
    pub strong_stereotype: bool,
    pub halo: bool,
    pub confirmation: bool,
    pub role_congruity: bool,
    pub self_serving: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasFlagsRepr {
    stereotype: bool,
    strong_stereotype: bool,
    halo: bool,
    confirmation: bool,
    role_congruity: bool,
    self_serving: bool,
}

impl TryFrom<BiasFlagsRepr> for BiasFlags {
    type Error = TypeError;

    fn try_from(r: BiasFlagsRepr) -> Result<Self, Self::Error> {
        let f = BiasFlags {
            stereotype: r.stereotype,
            strong_stereotype: r.strong_stereotype,
            halo: r.halo,
            confirmation: r.confirmation,
            role_congruity: r.role_congruity,
            self_serving: r.self_serving,
        };
        f.check()?;
        Ok(f)
    }
}

impl BiasFlags {
    pub fn check(&self) -> Result<(), TypeError> {
        if self.strong_stereotype && !self.stereotype {
            return Err(TypeError::StrongWithoutStereotype);
        }
        Ok(())
    }

    pub fn any(&self) -> bool {
        self.stereotype
            || self.strong_stereotype
            || self.halo
            || self.confirmation
            || self.role_congruity
            || self.self_serving
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_id_round_trips_through_neutral_name() {
        let a = AgentId(12);
        assert_eq!(a.to_string(), "person_12");
        assert_eq!("person_12".parse::<AgentId>().unwrap(), a);
        assert!("person_0".parse::<AgentId>().is_err());
        assert!("bob".parse::<AgentId>().is_err());
    }

    #[test]
    fn default_tasks_cover_all_quadrants() {
        let tasks = default_task_set();
        for w in [Warmth::Warm, Warmth::Cold] {
            for c in [Competence::Competent, Competence::Incompetent] {
                assert!(tasks.iter().any(|t| t.warmth == w && t.competence == c));
            }
        }
        let ids: BTreeSet<_> = tasks.iter().map(|t| &t.id).collect();
        assert_eq!(ids.len(), tasks.len());
    }

    #[test]
    fn profile_invariants() {
        assert!(AgentProfile::neutral(AgentId(3)).validate().is_ok());
        let mut p = AgentProfile::neutral(AgentId(3));
        p.age = Some(30);
        assert!(p.validate().is_err());

        let d = AgentProfile::demographic(AgentId(1), "Andrew He", 28, "man", "glasses");
        assert!(d.validate().is_ok());
        let mut d2 = d.clone();
        d2.appearance = Some("  ".into());
        assert!(d2.validate().is_err());
    }

    #[test]
    fn group_channel_size_rules() {
        let group = |ids: &[u32]| Channel::Group {
            participants: ids.iter().map(|i| AgentId(*i)).collect(),
        };
        assert!(group(&[1, 2]).validate(AgentId(1), 4).is_ok());
        assert!(group(&[1, 2, 3]).validate(AgentId(1), 4).is_ok());
        assert!(group(&[1, 2, 3, 4]).validate(AgentId(1), 4).is_err());
        assert!(group(&[1]).validate(AgentId(1), 4).is_err());
        assert!(Channel::Bilateral { to: AgentId(1) }
            .validate(AgentId(1), 4)
            .is_err());
    }

    #[test]
    fn channel_reach() {
        let b = Channel::Bilateral { to: AgentId(3) };
        assert!(b.reaches(AgentId(2), AgentId(3)));
        assert!(b.reaches(AgentId(2), AgentId(2)));
        assert!(!b.reaches(AgentId(2), AgentId(1)));
        assert!(Channel::Global.reaches(AgentId(2), AgentId(4)));
    }

    #[test]
    fn role_mappings_reject_broken_duality_on_decode() {
        let json = r#"{"agent_to_roles":{"2":["manager"]},"role_to_agents":{},"ratings":{}}"#;
        assert!(serde_json::from_str::<RoleMappings>(json).is_err());
        let json = r#"{"agent_to_roles":{"2":["manager"]},"role_to_agents":{"manager":[2]},"ratings":{"2":{"manager":11}}}"#;
        assert!(serde_json::from_str::<RoleMappings>(json).is_err());
    }

    #[test]
    fn bias_flags_implication_enforced() {
        let bad = r#"{"stereotype":false,"strong_stereotype":true,"halo":false,"confirmation":false,"role_congruity":false,"self_serving":false}"#;
        assert!(serde_json::from_str::<BiasFlags>(bad).is_err());
        let ok = bad.replace(r#""stereotype":false"#, r#""stereotype":true"#);
        assert!(serde_json::from_str::<BiasFlags>(&ok).is_ok());
    }

    #[test]
    fn event_encoding_is_flat() {
        let e = Event::td(3, AgentId(1), "manager".into(), Outcome::Success);
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"episode":3,"kind":"Td","agent":1,"task":"manager","outcome":"success"}"#
        );
        assert_eq!(serde_json::from_str::<Event>(&s).unwrap(), e);
    }
}
