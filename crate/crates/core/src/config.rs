//! Experiment configuration and its validation.
//!
//! Configs are TOML files; see `configs/` at the repository root for
//! annotated examples of every option.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigViolation};
use crate::types::{default_task_set, AgentId, AgentProfile, ProfileMode, TaskType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    RandomAssignment,
    Hierarchical,
}

/// How the fc_caller turns a player completion into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcCallerMode {
    /// Rule-based directive grammar only.
    Rule,
    /// A second model call with a strict JSON schema, rule grammar as a fast path.
    #[default]
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMode {
    /// Talk to the endpoint.
    #[default]
    Off,
    /// Serve responses from `fixture_dir`, never touching the network.
    Replay,
    /// Talk to the endpoint and store every response in `fixture_dir`.
    Record,
}

/// Parameters of a chat-completion backend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LlmSpec {
    /// Named model preset; fills base_url, model and api_key_env when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub fixture_mode: FixtureMode,
    #[serde(default)]
    pub fc_caller: FcCallerMode,
}

fn default_temperature() -> f64 {
    0.7
}

/// Provider presets for common model families.
/// All use the OpenAI-compatible chat-completions shape.
pub const MODEL_PRESETS: &[(&str, &str, &str, &str)] = &[
    // (preset, base_url, model, api_key_env)
    (
        "claude-3.5-sonnet",
        "https://api.anthropic.com/v1",
        "claude-3-5-sonnet-latest",
        "ANTHROPIC_API_KEY",
    ),
    (
        "claude-4-sonnet",
        "https://api.anthropic.com/v1",
        "claude-sonnet-4-0",
        "ANTHROPIC_API_KEY",
    ),
    (
        "claude-3-5-haiku-latest",
        "https://api.anthropic.com/v1",
        "claude-3-5-haiku-latest",
        "ANTHROPIC_API_KEY",
    ),
    (
        "gpt-4o",
        "https://api.openai.com/v1",
        "gpt-4o",
        "OPENAI_API_KEY",
    ),
    (
        "gpt-4.1",
        "https://api.openai.com/v1",
        "gpt-4.1",
        "OPENAI_API_KEY",
    ),
    (
        "gpt-4o-mini",
        "https://api.openai.com/v1",
        "gpt-4o-mini",
        "OPENAI_API_KEY",
    ),
    (
        "mistral-large-latest",
        "https://api.mistral.ai/v1",
        "mistral-large-latest",
        "MISTRAL_API_KEY",
    ),
    (
        "mistral-medium-latest",
        "https://api.mistral.ai/v1",
        "mistral-medium-latest",
        "MISTRAL_API_KEY",
    ),
    (
        "mistral-small-latest",
        "https://api.mistral.ai/v1",
        "mistral-small-latest",
        "MISTRAL_API_KEY",
    ),
    (
        "gemini-2.0-flash",
        "https://generativelanguage.googleapis.com/v1beta/openai",
        "gemini-2.0-flash",
        "GEMINI_API_KEY",
    ),
    (
        "gemini-1.5-flash",
        "https://generativelanguage.googleapis.com/v1beta/openai",
        "gemini-1.5-flash",
        "GEMINI_API_KEY",
    ),
    (
        "deepseek-chat",
        "https://api.deepseek.com/v1",
        "deepseek-chat",
        "DEEPSEEK_API_KEY",
    ),
];

impl LlmSpec {
    /// Applies the preset (if any) to unset fields.
    pub fn resolved(&self) -> Result<LlmSpec, String> {
        let mut out = self.clone();
        if let Some(name) = &self.preset {
            let (_, url, model, key) = MODEL_PRESETS
                .iter()
                .find(|(p, ..)| p == name)
                .ok_or_else(|| format!("unknown model preset {name:?}"))?;
            out.base_url.get_or_insert_with(|| url.to_string());
            out.model.get_or_insert_with(|| model.to_string());
            out.api_key_env.get_or_insert_with(|| key.to_string());
        }
        if out.base_url.as_deref().is_none_or(|s| s.trim().is_empty()) {
            return Err("llm_http requires an endpoint (base_url or preset)".into());
        }
        if out.model.as_deref().is_none_or(|s| s.trim().is_empty()) {
            return Err("llm_http requires a model name".into());
        }
        if out.fixture_mode != FixtureMode::Off && out.fixture_dir.is_none() {
            return Err("fixture_mode needs fixture_dir".into());
        }
        if !(0.0..=2.0).contains(&out.temperature) {
            return Err(format!("temperature {} outside [0,2]", out.temperature));
        }
        Ok(out)
    }
}

/// Decision backend of a player agent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    ScriptedSilent,
    #[default]
    ScriptedUniformRandom,
    ScriptedConfirmationBias {
        beta: f64,
    },
    ScriptedHalo {
        beta: f64,
    },
    LlmHttp(LlmSpec),
}

impl BackendSpec {
    pub fn is_scripted(&self) -> bool {
        !matches!(self, BackendSpec::LlmHttp(_))
    }

    fn check(&self) -> Result<(), String> {
        match self {
            BackendSpec::ScriptedConfirmationBias { beta } | BackendSpec::ScriptedHalo { beta } => {
                if !(0.0..=1.0).contains(beta) {
                    return Err(format!("bias strength β={beta} outside [0,1]"));
                }
                Ok(())
            }
            BackendSpec::LlmHttp(spec) => spec.resolved().map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Supervisor ("boss") policy for the hierarchical phase.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BossSpec {
    #[default]
    RepeatLastSuccess,
    SuccessRateGreedy,
    UniformRandom,
    LlmHttp(LlmSpec),
}

/// Parser agent turning assessments into role mappings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParserSpec {
    #[default]
    RuleBased,
    LlmHttp(LlmSpec),
}

/// Exponential backoff for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    #[serde(default = "default_base_ms")]
    pub base_delay_ms: u64,
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_base_ms() -> u64 {
    1000
}
fn default_factor() -> f64 {
    2.0
}
fn default_attempts() -> u32 {
    5
}
fn default_timeout_s() -> u64 {
    120
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base_delay_ms: default_base_ms(),
            factor: default_factor(),
            max_attempts: default_attempts(),
            timeout_s: default_timeout_s(),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.factor.powi(retry.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(600_000.0) as u64)
    }
}

/// Demographic description used in ablation runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicProfile {
    pub name: String,
    pub age: u32,
    pub gender: String,
    pub appearance: String,
}

/// Profiles file shape: `[[profiles]]` entries.
#[derive(Debug, Clone, Deserialize)]
pub struct ProfilesFile {
    pub profiles: Vec<DemographicProfile>,
}

impl ProfilesFile {
    pub fn load(path: &Path) -> Result<Vec<DemographicProfile>, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ProfilesFile =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(file.profiles)
    }
}

fn default_p0() -> f64 {
    0.8
}

/// Full experiment parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_agents: u32,
    #[serde(default = "default_task_set")]
    pub tasks: Vec<TaskType>,
    pub episodes: u32,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchical_start_episode: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub profile_mode: ProfileMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<DemographicProfile>,
    /// Backend used by every agent without an override.
    #[serde(default)]
    pub backend: BackendSpec,
    /// Per-agent overrides keyed by `person_{index}`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub agent_backends: BTreeMap<String, BackendSpec>,
    #[serde(default)]
    pub boss: BossSpec,
    #[serde(default)]
    pub parser: ParserSpec,
    /// Run a lightweight evaluation after every episode for time series.
    #[serde(default)]
    pub probes: bool,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl SimConfig {
    /// A scripted uniform-random config with the given size.
    pub fn new(n_agents: u32, tasks: Vec<TaskType>, episodes: u32, seed: u64) -> Self {
        SimConfig {
            n_agents,
            tasks,
            episodes,
            p0: default_p0(),
            mode: RunMode::RandomAssignment,
            hierarchical_start_episode: None,
            seed,
            profile_mode: ProfileMode::Neutral,
            profiles: Vec::new(),
            backend: BackendSpec::default(),
            agent_backends: BTreeMap::new(),
            boss: BossSpec::default(),
            parser: ParserSpec::default(),
            probes: false,
            retry: RetryPolicy::default(),
        }
    }

    pub fn hierarchical(mut self, start: u32) -> Self {
        self.mode = RunMode::Hierarchical;
        self.hierarchical_start_episode = Some(start);
        self
    }

    pub fn with_backend(mut self, backend: BackendSpec) -> Self {
        self.backend = backend;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        AgentId::all(self.n_agents)
    }

    pub fn backend_for(&self, agent: AgentId) -> &BackendSpec {
        self.agent_backends
            .get(&agent.neutral_name())
            .unwrap_or(&self.backend)
    }

    /// Agent profiles according to `profile_mode`.
    pub fn agent_profiles(&self) -> Vec<AgentProfile> {
        self.agents()
            .map(|a| match self.profile_mode {
                ProfileMode::Neutral => AgentProfile::neutral(a),
                ProfileMode::Demographic => {
                    let p = &self.profiles[(a.0 - 1) as usize];
                    AgentProfile::demographic(a, &p.name, p.age, &p.gender, &p.appearance)
                }
            })
            .collect()
    }

    /// Phase boundaries: the last episode of each phase.
    pub fn phase_ends(&self) -> Vec<u32> {
        match (self.mode, self.hierarchical_start_episode) {
            (RunMode::Hierarchical, Some(start)) if start >= 2 => vec![start - 1, self.episodes],
            _ => vec![self.episodes],
        }
    }

    pub fn is_supervised_episode(&self, episode: u32) -> bool {
        self.mode == RunMode::Hierarchical
            && self
                .hierarchical_start_episode
                .is_some_and(|start| episode >= start)
    }

    pub fn uses_llm(&self) -> bool {
        !self.backend.is_scripted()
            || self.agent_backends.values().any(|b| !b.is_scripted())
            || matches!(self.boss, BossSpec::LlmHttp(_))
            || matches!(self.parser, ParserSpec::LlmHttp(_))
    }
}

/// Returns the config iff every invariant holds; otherwise all violations.
pub fn validate_config(config: SimConfig) -> Result<SimConfig, Vec<ConfigViolation>> {
    let mut v = Vec::new();
    if config.n_agents < 2 {
        v.push(ConfigViolation::TooFewAgents(config.n_agents));
    }
    if config.tasks.is_empty() {
        v.push(ConfigViolation::EmptyTaskSet);
    }
    let mut seen = BTreeSet::new();
    for t in &config.tasks {
        if !seen.insert(&t.id) {
            v.push(ConfigViolation::DuplicateTask(t.id.clone()));
        }
    }
    if config.episodes == 0 {
        v.push(ConfigViolation::NoEpisodes);
    }
    if !(0.0..=1.0).contains(&config.p0) || config.p0.is_nan() {
        v.push(ConfigViolation::P0OutOfRange(config.p0));
    }
    if config.mode == RunMode::Hierarchical {
        match config.hierarchical_start_episode {
            None => v.push(ConfigViolation::MissingHierarchicalStart),
            Some(start) => {
                if start > config.episodes {
                    v.push(ConfigViolation::HierarchicalStartBeyondEpisodes {
                        start,
                        episodes: config.episodes,
                    });
                }
                if start < 2 {
                    v.push(ConfigViolation::HierarchicalStartTooEarly(start));
                }
            }
        }
    }
    if config.profile_mode == ProfileMode::Demographic {
        if config.profiles.len() != config.n_agents as usize {
            v.push(ConfigViolation::ProfileCount {
                expected: config.n_agents,
                got: config.profiles.len(),
            });
        } else {
            for p in config.agent_profiles() {
                if let Err(e) = p.validate() {
                    v.push(ConfigViolation::Profile(e.to_string()));
                }
            }
        }
    }
    let mut check_backend = |who: String, r: Result<(), String>| {
        if let Err(why) = r {
            v.push(ConfigViolation::Backend { who, why });
        }
    };
    check_backend("default backend".into(), config.backend.check());
    for (name, b) in &config.agent_backends {
        let who = match name.parse::<AgentId>() {
            Ok(a) if a.0 <= config.n_agents => name.clone(),
            _ => {
                check_backend(
                    name.clone(),
                    Err("override key is not an agent of this run".into()),
                );
                continue;
            }
        };
        check_backend(who, b.check());
    }
    if let BossSpec::LlmHttp(spec) = &config.boss {
        check_backend("boss".into(), spec.resolved().map(|_| ()));
    }
    if let ParserSpec::LlmHttp(spec) = &config.parser {
        check_backend("parser".into(), spec.resolved().map(|_| ()));
    }
    if config.retry.max_attempts == 0 {
        check_backend("retry".into(), Err("max_attempts must be ≥ 1".into()));
    }
    if v.is_empty() {
        Ok(config)
    } else {
        Err(v)
    }
}
