//! Append-only NDJSON run logs.
//!
//! One JSON object per line:
//!
//! ```text
//! {"v":1,"record":"meta","data":{...}}
//! {"v":1,"record":"supervisor_decision","data":{...}}
//! {"v":1,"record":"episode","data":{...}}
//! {"v":1,"record":"transport","data":{...}}
//! {"v":1,"record":"evaluation","data":{...}}
//! {"v":1,"record":"error","data":{...}}
//! {"v":1,"record":"end","data":{...}}
//! ```
//!
//! `meta` is always first and is the only record carrying a wall-clock
//! timestamp. `end` is written only when a run finishes; a log without it is
//! a partial run. Readers accept a truncated final line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentAction, TraceEntry};
use crate::config::SimConfig;
use crate::error::LogError;
use crate::evaluation::EvaluationRound;
use crate::supervisor::SupervisorDecision;
use crate::types::{AgentId, Assignment, EpisodeRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: SimConfig,
    pub seed: u64,
    pub template_hashes: BTreeMap<String, String>,
    /// System prompt per agent (`person_k`), for LLM-backed agents.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub system_prompts: BTreeMap<String, String>,
    pub software_version: String,
    pub started_at: String,
}

/// What one agent did in an episode's interaction phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub agent: AgentId,
    pub action: AgentAction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<String>,
    /// Backend failure that silenced the agent this episode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub record: EpisodeRecord,
    pub assignment: Assignment,
    pub supervised: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
    pub actions: Vec<ActionLog>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub episode: u32,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndRecord {
    pub episodes: u32,
    pub evaluations: usize,
}

/// One log line.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Meta(Box<RunMeta>),
    Episode(Box<EpisodeLog>),
    SupervisorDecision(SupervisorDecision),
    Evaluation(Box<EvaluationRound>),
    Transport(Box<TraceEntry>),
    Error(ErrorRecord),
    End(EndRecord),
}

impl Record {
    pub fn name(&self) -> &'static str {
        match self {
            Record::Meta(_) => "meta",
            Record::Episode(_) => "episode",
            Record::SupervisorDecision(_) => "supervisor_decision",
            Record::Evaluation(_) => "evaluation",
            Record::Transport(_) => "transport",
            Record::Error(_) => "error",
            Record::End(_) => "end",
        }
    }

    /// The record as a single NDJSON line (without the newline).
    pub fn to_line(&self) -> Result<String, LogError> {
        let data = match self {
            Record::Meta(x) => serde_json::to_string(x),
            Record::Episode(x) => serde_json::to_string(x),
            Record::SupervisorDecision(x) => serde_json::to_string(x),
            Record::Evaluation(x) => serde_json::to_string(x),
            Record::Transport(x) => serde_json::to_string(x),
            Record::Error(x) => serde_json::to_string(x),
            Record::End(x) => serde_json::to_string(x),
        }
        .map_err(|e| LogError::Encode(e.to_string()))?;
        Ok(format!(
            r#"{{"v":{SCHEMA_VERSION},"record":"{}","data":{data}}}"#,
            self.name()
        ))
    }

    pub fn from_line(line: &str, lineno: usize) -> Result<Record, LogError> {
        #[derive(Deserialize)]
        struct Raw {
            v: u32,
            record: String,
            data: serde_json::Value,
        }
        let corrupt = |msg: String| LogError::Corrupt { line: lineno, msg };
        let raw: Raw = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if raw.v != SCHEMA_VERSION {
            return Err(LogError::Version(raw.v));
        }
        fn de<T: DeserializeOwned>(v: serde_json::Value) -> Result<T, String> {
            serde_json::from_value(v).map_err(|e| e.to_string())
        }
        let rec = match raw.record.as_str() {
            "meta" => de(raw.data).map(|x| Record::Meta(Box::new(x))),
            "episode" => de(raw.data).map(|x| Record::Episode(Box::new(x))),
            "supervisor_decision" => de(raw.data).map(Record::SupervisorDecision),
            "evaluation" => de(raw.data).map(|x| Record::Evaluation(Box::new(x))),
            "transport" => de(raw.data).map(|x| Record::Transport(Box::new(x))),
            "error" => de(raw.data).map(Record::Error),
            "end" => de(raw.data).map(Record::End),
            other => Err(format!("unknown record type {other:?}")),
        };
        rec.map_err(corrupt)
    }
}

/// Receives records as a run progresses.
pub trait RunSink {
    fn write(&mut self, record: &Record) -> Result<(), LogError>;
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl RunSink for NullSink {
    fn write(&mut self, _record: &Record) -> Result<(), LogError> {
        Ok(())
    }
}

/// Collects lines in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub lines: Vec<String>,
}

impl RunSink for MemorySink {
    fn write(&mut self, record: &Record) -> Result<(), LogError> {
        self.lines.push(record.to_line()?);
        Ok(())
    }
}

/// Streams records to a file, flushing after each one.
pub struct NdjsonWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl NdjsonWriter {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = File::create(path).map_err(io)?;
        Ok(NdjsonWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl RunSink for NdjsonWriter {
    fn write(&mut self, record: &Record) -> Result<(), LogError> {
        let line = record.to_line()?;
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        writeln!(self.out, "{line}").map_err(io)?;
        self.out.flush().map_err(io)
    }
}

/// A run log assembled from its records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub episodes: Vec<EpisodeLog>,
    pub evaluations: Vec<EvaluationRound>,
    pub supervisor_decisions: Vec<SupervisorDecision>,
    pub transport_trace: Vec<TraceEntry>,
    pub errors: Vec<ErrorRecord>,
    pub end: Option<EndRecord>,
    /// The file ended in a partial line.
    pub truncated: bool,
}

impl RunLog {
    pub fn new(meta: RunMeta) -> Self {
        RunLog {
            meta,
            episodes: Vec::new(),
            evaluations: Vec::new(),
            supervisor_decisions: Vec::new(),
            transport_trace: Vec::new(),
            errors: Vec::new(),
            end: None,
            truncated: false,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.end.is_some()
    }

    pub fn history(&self) -> Vec<EpisodeRecord> {
        self.episodes.iter().map(|e| e.record.clone()).collect()
    }

    /// Adds a record (meta must already be set).
    pub fn apply(&mut self, record: Record) {
        match record {
            Record::Meta(m) => self.meta = *m,
            Record::Episode(e) => self.episodes.push(*e),
            Record::SupervisorDecision(d) => self.supervisor_decisions.push(d),
            Record::Evaluation(r) => self.evaluations.push(*r),
            Record::Transport(t) => self.transport_trace.push(*t),
            Record::Error(e) => self.errors.push(e),
            Record::End(e) => self.end = Some(e),
        }
    }

    /// Records in canonical order: meta, then per episode its supervisor
    /// decision, transport entries and episode record, then evaluations
    /// after their episode, errors, end.
    pub fn records(&self) -> Vec<Record> {
        let mut out = vec![Record::Meta(Box::new(self.meta.clone()))];
        for ep in &self.episodes {
            let k = ep.record.index;
            for d in self.supervisor_decisions.iter().filter(|d| d.episode == k) {
                out.push(Record::SupervisorDecision(d.clone()));
            }
            out.push(Record::Episode(Box::new(ep.clone())));
            for r in self.evaluations.iter().filter(|r| r.phase_end_episode == k) {
                out.push(Record::Evaluation(Box::new(r.clone())));
            }
        }
        out.extend(
            self.transport_trace
                .iter()
                .map(|t| Record::Transport(Box::new(t.clone()))),
        );
        out.extend(self.errors.iter().cloned().map(Record::Error));
        out.extend(self.end.clone().map(Record::End));
        out
    }

    pub fn write_to(&self, sink: &mut dyn RunSink) -> Result<(), LogError> {
        self.records().iter().try_for_each(|r| sink.write(r))
    }

    pub fn parse(text: &str) -> Result<RunLog, LogError> {
        let mut log: Option<RunLog> = None;
        let ends_clean = text.is_empty() || text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let last = i + 1 == lines.len();
            let rec = match Record::from_line(line, i + 1) {
                Ok(r) => r,
                Err(LogError::Corrupt { .. }) if last && !ends_clean => {
                    if let Some(l) = log.as_mut() {
                        l.truncated = true;
                    }
                    break;
                }
                Err(e) => return Err(e),
            };
            match (&mut log, rec) {
                (None, Record::Meta(m)) => log = Some(RunLog::new(*m)),
                (None, _) => return Err(LogError::MissingMeta),
                (Some(l), rec) => l.apply(rec),
            }
        }
        log.ok_or(LogError::MissingMeta)
    }

    pub fn read(path: &Path) -> Result<RunLog, LogError> {
        let file = File::open(path).map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut text = String::new();
        let mut reader = BufReader::new(file);
        loop {
            let n = reader.read_line(&mut text).map_err(|source| LogError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if n == 0 {
                break;
            }
        }
        RunLog::parse(&text)
    }
}
