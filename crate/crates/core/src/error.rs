use std::path::PathBuf;

use thiserror::Error;

use crate::types::{AgentId, TaskId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("not an agent identifier: {0:?}")]
    BadAgentId(String),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("{0} cannot message itself")]
    SelfAddressed(AgentId),
    #[error("group of {size} participants violates 2 <= k < {n_agents}")]
    GroupSize { size: usize, n_agents: u32 },
    #[error("invalid profile for {0}: {1}")]
    InvalidProfile(AgentId, String),
    #[error("role mappings not dual at ({0}, {1})")]
    MappingDuality(AgentId, TaskId),
    #[error("rating {2} for ({0}, {1}) outside 1..=10")]
    RatingRange(AgentId, TaskId, u8),
    #[error("strong_stereotype requires stereotype")]
    StrongWithoutStereotype,
}

/// A single violated configuration invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigViolation {
    #[error("n_agents ≥ 2 violated (got {0})")]
    TooFewAgents(u32),
    #[error("task set must not be empty")]
    EmptyTaskSet,
    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),
    #[error("episodes ≥ 1 violated")]
    NoEpisodes,
    #[error("p0 ∈ [0,1] violated (got {0})")]
    P0OutOfRange(f64),
    #[error("hierarchical mode requires hierarchical_start_episode")]
    MissingHierarchicalStart,
    #[error("hierarchical_start_episode {start} beyond episode count {episodes}")]
    HierarchicalStartBeyondEpisodes { start: u32, episodes: u32 },
    #[error("hierarchical_start_episode must be ≥ 2 so the supervisor sees history (got {0})")]
    HierarchicalStartTooEarly(u32),
    #[error("demographic mode needs {expected} profiles, got {got}")]
    ProfileCount { expected: u32, got: usize },
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("backend for {who}: {why}")]
    Backend { who: String, why: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ConfigViolation>),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Client { status: u16, body: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("no recorded fixture for request {0}")]
    FixtureMissing(String),
    #[error("malformed completion response: {0}")]
    Decode(String),
    #[error("fixture io: {0}")]
    Io(String),
}

impl LlmError {
    /// Errors that retrying or skipping an agent cannot fix.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::MissingCredential(_)
                | LlmError::Client { .. }
                | LlmError::FixtureMissing(_)
                | LlmError::Io(_)
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("output could not be parsed: {0}")]
    Unparseable(String),
}

impl BackendError {
    pub fn is_fatal(&self) -> bool {
        match self {
            BackendError::Llm(e) => e.is_fatal(),
            BackendError::Unparseable(_) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run already finished all {0} episodes")]
    Finished(u32),
    #[error("unrecoverable backend failure: {0}")]
    Backend(BackendError),
    #[error("every agent failed in episode {0}; transport exhausted")]
    TransportExhausted(u32),
    #[error("log sink: {0}")]
    Sink(#[from] LogError),
    #[error("evaluation: {0}")]
    Evaluation(#[from] EvalError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("assignment omits {0}")]
    MissingAgent(AgentId),
    #[error("assignment names unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("assignment lists {0} more than once")]
    DuplicateAgent(AgentId),
    #[error("task {0} is not in the task set")]
    UnknownTask(TaskId),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no assessments to parse")]
    NoAssessments,
    #[error("no valid evaluation rounds")]
    NoValidRounds,
    #[error("could not parse assessment of {subject} by {evaluator}: {why}")]
    Parse {
        evaluator: AgentId,
        subject: AgentId,
        why: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("category scores sum to zero")]
    ZeroTotal,
    #[error("need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("negative category score")]
    NegativeScore,
    #[error("empty input")]
    Empty,
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(&'static str),
    #[error("point outside the normalized domain")]
    Domain,
    #[error("need at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("no evaluation data")]
    NoEvaluationData,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("log has no meta record")]
    MissingMeta,
    #[error("unsupported schema version {0}")]
    Version(u32),
    #[error("encoding: {0}")]
    Encode(String),
}
