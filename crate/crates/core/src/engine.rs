//! The synchronized episode cycle.
//!
//! Each episode runs four phases in order:
//!
//! 1. **allocation**: uniform random, or the supervisor in the hierarchical
//!    phase (its rationale becomes an Sn event);
//! 2. **execution**: one Td event per agent in AgentId order, success with
//!    probability `p0`;
//! 3. **broadcast**: one Sn per outcome, then every message queued in the
//!    previous episode in send order;
//! 4. **interaction**: every agent acts on its visible history; the messages
//!    are queued for the next episode's broadcast.
//!
//! Agents in phase 4 run concurrently and see no same-episode messages;
//! their results are committed in AgentId order. Assignment, outcome and
//! supervisor draws use separate random streams.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agents::{
    build_backends,
    llm::new_trace,
    prompt::{build_system_prompt, template_hashes},
    react_cycle, AgentAction, AgentBackend, Observation, RunInfo, TraceBuffer,
};
use crate::config::{validate_config, SimConfig};
use crate::error::{BackendError, ConfigError, EngineError, LogError};
use crate::evaluation::{
    build_parser, evaluation_round, AssessmentParser, EvaluationRound, RoundKind,
};
use crate::rng::{stream, Stream};
use crate::runlog::{
    ActionLog, EndRecord, EpisodeLog, ErrorRecord, Record, RunLog, RunMeta, RunSink,
};
use crate::supervisor::{build_boss, supervisor_assign, Boss, SupervisorDecision};
use crate::types::{
    AgentId, Assignment, EpisodeRecord, Event, EventPayload, Outcome, TaskId, TaskType,
};

/// Canonical outcome notification.
pub fn outcome_notice(agent: AgentId, task: &TaskId, outcome: Outcome) -> String {
    let word = if outcome.is_success() {
        "succeeded"
    } else {
        "failed"
    };
    format!("{agent} {word} as {task}")
}

/// Mutable state of one run.
pub struct RunState {
    pub config: SimConfig,
    assignment_rng: ChaCha8Rng,
    outcome_rng: ChaCha8Rng,
    supervisor_rng: ChaCha8Rng,
    /// Completed episodes.
    pub history: Vec<EpisodeRecord>,
    /// The episode in progress, between broadcast and commit.
    current: Option<EpisodeRecord>,
    /// Im events created in the current episode, awaiting delivery.
    pub pending: Vec<Event>,
    pub current_episode: u32,
}

impl RunState {
    /// Expects a validated config.
    pub fn new(config: SimConfig) -> Self {
        let seed = config.seed;
        RunState {
            config,
            assignment_rng: stream(seed, Stream::Assignment),
            outcome_rng: stream(seed, Stream::Outcome),
            supervisor_rng: stream(seed, Stream::Supervisor),
            history: Vec::new(),
            current: None,
            pending: Vec::new(),
            current_episode: 0,
        }
    }

    pub fn tasks(&self) -> &[TaskType] {
        &self.config.tasks
    }

    /// Uniform task per agent, draws consumed in AgentId order.
    pub fn assign_random(&mut self) -> Assignment {
        let tasks = &self.config.tasks;
        let rng = &mut self.assignment_rng;
        AgentId::all(self.config.n_agents)
            .map(|a| (a, tasks.choose(rng).expect("non-empty task set").id.clone()))
            .collect()
    }

    /// Success with probability `p0`, independent of agent and task.
    pub fn sample_outcome(&mut self, _agent: AgentId, _task: &TaskId) -> Outcome {
        if self.outcome_rng.random::<f64>() < self.config.p0 {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }

    /// Outcome notices for the episode's Td events, followed by the
    /// messages queued in the previous episode (re-stamped, in send order).
    /// Clears the queue.
    pub fn broadcast(&mut self, record: &EpisodeRecord) -> Vec<Event> {
        let k = record.index;
        let mut out: Vec<Event> = record
            .td_events()
            .map(|(a, t, o)| Event::sn(k, outcome_notice(a, t, o)))
            .collect();
        out.extend(self.pending.drain(..).map(|mut e| {
            e.episode = k;
            e
        }));
        out
    }

    /// Events visible to `agent`: every Td and Sn event and each delivered
    /// Im event that reaches it, in chronological order.
    pub fn visible_history(&self, agent: AgentId) -> Vec<Event> {
        self.history
            .iter()
            .chain(self.current.as_ref())
            .flat_map(|r| r.events.iter())
            .filter(|e| match &e.payload {
                EventPayload::Im {
                    sender, channel, ..
                } => channel.reaches(*sender, agent),
                _ => true,
            })
            .cloned()
            .collect()
    }

    /// Runs one decision cycle per agent and queues the resulting messages.
    /// Returns the per-agent log entries and the Sn events for failures.
    pub fn interaction_phase(
        &mut self,
        backends: &[Arc<dyn AgentBackend>],
        assignment: &Assignment,
    ) -> Result<(Vec<ActionLog>, Vec<Event>), EngineError> {
        let k = self.current_episode + 1;
        let n = self.config.n_agents;
        let record = self.current.as_ref().expect("episode in progress");
        let observations: Vec<Observation> = AgentId::all(n)
            .map(|a| {
                let own_outcome = record
                    .td_events()
                    .find(|(x, ..)| *x == a)
                    .map(|(.., o)| o)
                    .expect("every agent executed a task");
                Observation {
                    agent: a,
                    episode: k,
                    visible_events: self.visible_history(a),
                    own_assignment: assignment.task_of(a).expect("total assignment").clone(),
                    own_outcome,
                }
            })
            .collect();
        let results: Vec<Result<crate::agents::Reaction, BackendError>> = observations
            .par_iter()
            .map(|obs| react_cycle(backends[(obs.agent.0 - 1) as usize].as_ref(), obs, n))
            .collect();

        let mut logs = Vec::with_capacity(n as usize);
        let mut notices = Vec::new();
        let mut failures = 0;
        for (obs, result) in observations.iter().zip(results) {
            let a = obs.agent;
            match result {
                Ok(r) => {
                    for issue in &r.issues {
                        log::warn!("episode {k}, {a}: {issue}");
                    }
                    for m in &r.action.messages {
                        self.pending.push(Event {
                            episode: k,
                            payload: EventPayload::Im {
                                sender: a,
                                channel: m.channel.clone(),
                                body: m.body.clone(),
                                sent_in: k,
                                tag: m.tag.clone(),
                            },
                        });
                    }
                    logs.push(ActionLog {
                        agent: a,
                        action: r.action,
                        issues: r.issues,
                        failure: None,
                    });
                }
                Err(e) if e.is_fatal() => return Err(EngineError::Backend(e)),
                Err(e) => {
                    failures += 1;
                    log::warn!("episode {k}, {a}: backend failed: {e}");
                    notices.push(Event::sn(k, format!("{a} was unavailable this round")));
                    logs.push(ActionLog {
                        agent: a,
                        action: AgentAction::silent(""),
                        issues: Vec::new(),
                        failure: Some(e.to_string()),
                    });
                }
            }
        }
        if failures == n && n > 0 {
            return Err(EngineError::TransportExhausted(k));
        }
        Ok((logs, notices))
    }

    /// Executes one full episode.
    pub fn run_episode(
        &mut self,
        backends: &[Arc<dyn AgentBackend>],
        boss: Option<&dyn Boss>,
        info: &RunInfo,
    ) -> Result<(EpisodeLog, Option<SupervisorDecision>), EngineError> {
        if self.current_episode >= self.config.episodes {
            return Err(EngineError::Finished(self.config.episodes));
        }
        let k = self.current_episode + 1;
        let mut record = EpisodeRecord::new(k);
        let supervised = self.config.is_supervised_episode(k) && boss.is_some();

        let (assignment, decision) = match boss.filter(|_| supervised) {
            Some(boss) => {
                let Self {
                    history,
                    assignment_rng,
                    supervisor_rng,
                    config,
                    ..
                } = self;
                let fallback = || {
                    AgentId::all(config.n_agents)
                        .map(|a| {
                            (
                                a,
                                config
                                    .tasks
                                    .choose(assignment_rng)
                                    .expect("tasks")
                                    .id
                                    .clone(),
                            )
                        })
                        .collect()
                };
                let d = supervisor_assign(history, info, k, boss, supervisor_rng, fallback)
                    .map_err(EngineError::Backend)?;
                record
                    .events
                    .push(Event::sn(k, format!("supervisor: {}", d.rationale)));
                (d.assignment.clone(), Some(d))
            }
            None => (self.assign_random(), None),
        };

        for a in AgentId::all(self.config.n_agents) {
            let task = assignment.task_of(a).expect("total assignment").clone();
            let outcome = self.sample_outcome(a, &task);
            record.events.push(Event::td(k, a, task, outcome));
        }
        let delivered = self.broadcast(&record);
        record.events.extend(delivered);

        self.current = Some(record);
        let interaction = self.interaction_phase(backends, &assignment);
        let mut record = self.current.take().expect("episode in progress");
        let (actions, notices) = match interaction {
            Ok(x) => x,
            Err(e) => {
                self.history.push(record);
                self.current_episode = k;
                return Err(e);
            }
        };
        record.events.extend(notices);
        self.history.push(record.clone());
        self.current_episode = k;
        let degraded = decision.as_ref().is_some_and(|d| d.degraded);
        Ok((
            EpisodeLog {
                record,
                assignment,
                supervised,
                degraded,
                actions,
            },
            decision,
        ))
    }
}

/// A run that stopped early; `log` holds everything recorded up to the error.
#[derive(Debug)]
pub struct PartialRun {
    pub log: Box<RunLog>,
    pub error: EngineError,
}

impl std::fmt::Display for PartialRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run stopped after {} episodes: {}",
            self.log.episodes.len(),
            self.error
        )
    }
}

impl std::error::Error for PartialRun {}

/// Everything a run needs besides its config.
pub struct Simulation {
    pub config: SimConfig,
    pub info: Arc<RunInfo>,
    pub backends: Vec<Arc<dyn AgentBackend>>,
    pub boss: Box<dyn Boss>,
    pub parser: Box<dyn AssessmentParser>,
    pub trace: TraceBuffer,
    pub software_version: String,
}

impl Simulation {
    /// Validates the config and builds every backend it names.
    pub fn from_config(config: SimConfig) -> Result<Self, EngineError> {
        let config =
            validate_config(config).map_err(|v| EngineError::Config(ConfigError::Invalid(v)))?;
        let trace = new_trace();
        let backends =
            build_backends(&config, &trace).map_err(|e| EngineError::Backend(e.into()))?;
        let boss = build_boss(&config.boss, config.retry, &trace)
            .map_err(|e| EngineError::Backend(e.into()))?;
        let parser = build_parser(&config.parser, config.retry, &trace)
            .map_err(|e| EngineError::Backend(e.into()))?;
        Ok(Simulation {
            info: Arc::new(RunInfo::from_config(&config)),
            config,
            backends,
            boss,
            parser,
            trace,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn meta(&self) -> RunMeta {
        let system_prompts = self
            .backends
            .iter()
            .zip(&self.info.profiles)
            .map(|(b, profile)| {
                let prompt = b
                    .system_prompt()
                    .map(str::to_string)
                    .unwrap_or_else(|| build_system_prompt(profile, &self.info));
                (profile.agent.to_string(), prompt)
            })
            .collect::<BTreeMap<_, _>>();
        RunMeta {
            config: self.config.clone(),
            seed: self.config.seed,
            template_hashes: template_hashes(),
            system_prompts,
            software_version: self.software_version.clone(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Runs every episode, evaluating at phase ends (and after every
    /// episode when probes are enabled), streaming records to `sink`.
    pub fn run(&self, sink: &mut dyn RunSink) -> Result<RunLog, PartialRun> {
        let meta = self.meta();
        let mut log = RunLog::new(meta.clone());
        let mut emit = |log: &mut RunLog, rec: Record| -> Result<(), LogError> {
            sink.write(&rec)?;
            log.apply(rec);
            Ok(())
        };
        if let Err(e) = emit(&mut log, Record::Meta(Box::new(meta))) {
            return Err(PartialRun {
                log: Box::new(log),
                error: e.into(),
            });
        }
        let mut state = RunState::new(self.config.clone());
        let phase_ends = self.config.phase_ends();
        let outcome = (|| -> Result<(), EngineError> {
            for _ in 0..self.config.episodes {
                let result =
                    state.run_episode(&self.backends, Some(self.boss.as_ref()), &self.info);
                let traces = std::mem::take(&mut *self.trace.lock().expect("trace lock"));
                let (ep, decision) = match result {
                    Ok(x) => x,
                    Err(e) => {
                        for t in traces {
                            emit(&mut log, Record::Transport(Box::new(t)))?;
                        }
                        return Err(e);
                    }
                };
                let k = ep.record.index;
                if let Some(d) = decision {
                    emit(&mut log, Record::SupervisorDecision(d))?;
                }
                emit(&mut log, Record::Episode(Box::new(ep)))?;
                for t in traces {
                    emit(&mut log, Record::Transport(Box::new(t)))?;
                }
                let kind = if phase_ends.contains(&k) {
                    Some(RoundKind::Phase)
                } else if self.config.probes {
                    Some(RoundKind::Probe)
                } else {
                    None
                };
                if let Some(kind) = kind {
                    let round = self
                        .evaluate(&state, kind, k)
                        .map_err(EngineError::Backend)?;
                    let traces = std::mem::take(&mut *self.trace.lock().expect("trace lock"));
                    for t in traces {
                        emit(&mut log, Record::Transport(Box::new(t)))?;
                    }
                    emit(&mut log, Record::Evaluation(Box::new(round)))?;
                }
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => {
                let end = EndRecord {
                    episodes: state.current_episode,
                    evaluations: log.evaluations.len(),
                };
                if let Err(e) = emit(&mut log, Record::End(end)) {
                    return Err(PartialRun {
                        log: Box::new(log),
                        error: e.into(),
                    });
                }
                Ok(log)
            }
            Err(error) => {
                let rec = ErrorRecord {
                    episode: state.current_episode,
                    kind: error_kind(&error).into(),
                    message: error.to_string(),
                };
                let _ = emit(&mut log, Record::Error(rec));
                Err(PartialRun {
                    log: Box::new(log),
                    error,
                })
            }
        }
    }

    fn evaluate(
        &self,
        state: &RunState,
        kind: RoundKind,
        episode: u32,
    ) -> Result<EvaluationRound, BackendError> {
        let tasks: Vec<TaskId> = self.config.tasks.iter().map(|t| t.id.clone()).collect();
        evaluation_round(
            kind,
            self.config.n_agents,
            episode,
            &tasks,
            &self.backends,
            self.parser.as_ref(),
            |a| state.visible_history(a),
        )
    }
}

pub fn error_kind(e: &EngineError) -> &'static str {
    match e {
        EngineError::Config(_) => "config",
        EngineError::Finished(_) => "finished",
        EngineError::Backend(_) => "backend",
        EngineError::TransportExhausted(_) => "transport_exhausted",
        EngineError::Sink(_) => "sink",
        EngineError::Evaluation(_) => "evaluation",
    }
}

/// Validates `config`, builds its backends and runs it.
pub fn run_experiment(config: SimConfig, sink: &mut dyn RunSink) -> Result<RunLog, PartialRun> {
    let sim = match Simulation::from_config(config.clone()) {
        Ok(s) => s,
        Err(error) => {
            let meta = RunMeta {
                config,
                seed: 0,
                template_hashes: template_hashes(),
                system_prompts: BTreeMap::new(),
                software_version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            };
            return Err(PartialRun {
                log: Box::new(RunLog::new(meta)),
                error,
            });
        }
    };
    sim.run(sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BackendSpec;
    use crate::runlog::MemorySink;
    use crate::types::quadrant_task_set;

    fn silent(n: u32, episodes: u32) -> SimConfig {
        SimConfig::new(n, quadrant_task_set(), episodes, 42)
            .with_backend(BackendSpec::ScriptedSilent)
    }

    #[test]
    fn minimal_run_shape() {
        let log = run_experiment(silent(2, 1), &mut MemorySink::default()).unwrap();
        let r = &log.episodes[0].record;
        assert_eq!(r.events.iter().filter(|e| e.is_td()).count(), 2);
        assert_eq!(r.events.iter().filter(|e| e.is_sn()).count(), 2);
        assert_eq!(r.events.iter().filter(|e| e.is_im()).count(), 0);
        assert!(r.events.iter().all(|e| e.episode == r.index));
        assert_eq!(log.evaluations.len(), 1);
    }

    #[test]
    fn degenerate_outcome_probabilities() {
        for (p0, want) in [(1.0, Outcome::Success), (0.0, Outcome::Failure)] {
            let mut c = silent(2, 1);
            c.p0 = p0;
            let mut s = RunState::new(c);
            for _ in 0..1000 {
                assert_eq!(s.sample_outcome(AgentId(1), &"manager".into()), want);
            }
        }
    }

    #[test]
    fn singleton_task_set() {
        let mut c = silent(3, 1);
        c.tasks.truncate(1);
        let mut s = RunState::new(c);
        let a = s.assign_random();
        assert!(a.pairs.values().all(|t| t.as_str() == "data_scientist"));
    }

    #[test]
    fn empty_history_before_first_episode() {
        let s = RunState::new(silent(3, 1));
        assert!(s.visible_history(AgentId(1)).is_empty());
    }

    #[test]
    fn episode_past_end_is_error() {
        let sim = Simulation::from_config(silent(2, 1)).unwrap();
        let mut s = RunState::new(sim.config.clone());
        s.run_episode(&sim.backends, None, &sim.info).unwrap();
        assert!(matches!(
            s.run_episode(&sim.backends, None, &sim.info),
            Err(EngineError::Finished(1))
        ));
    }
}
