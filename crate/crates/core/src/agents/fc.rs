//! Rule-based fc_caller: turns free-form player output into an [`AgentAction`].
//!
//! Grammar, one directive per line:
//!
//! ```text
//! SEND_TO person_2: great work
//! SEND_GROUP person_1,person_3: shall we split the load?
//! SEND_ALL: thanks everyone
//! ```
//!
//! Any other non-empty line is part of the thought; an optional `THOUGHT:`
//! prefix is stripped. Agents may be named by `person_k` or, in demographic
//! runs, by display name.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::{AgentAction, OutgoingMessage, MESSAGE_BUDGET};
use crate::types::{AgentId, Channel};

static SEND_TO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^SEND_TO\s+([^:]+?)\s*:\s*(.*)$").unwrap());
static SEND_GROUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^SEND_GROUP\s+([^:]+?)\s*:\s*(.*)$").unwrap());
static SEND_ALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^SEND_ALL\s*:\s*(.*)$").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty output")]
    Empty,
}

/// Who is speaking and which names resolve to which agents.
#[derive(Debug, Clone)]
pub struct ParseContext {
    pub sender: AgentId,
    pub n_agents: u32,
    /// Lower-cased display names.
    names: Vec<(String, AgentId)>,
}

impl ParseContext {
    pub fn new(sender: AgentId, n_agents: u32) -> Self {
        ParseContext {
            sender,
            n_agents,
            names: Vec::new(),
        }
    }

    pub fn with_names<'a>(mut self, names: impl IntoIterator<Item = (&'a str, AgentId)>) -> Self {
        self.names = names
            .into_iter()
            .map(|(n, a)| (n.trim().to_lowercase(), a))
            .collect();
        self
    }

    pub fn resolve(&self, token: &str) -> Option<AgentId> {
        let token = token.trim();
        if let Ok(a) = token.parse::<AgentId>() {
            return (a.0 <= self.n_agents).then_some(a);
        }
        let lower = token.to_lowercase();
        self.names
            .iter()
            .find(|(n, _)| *n == lower)
            .map(|(_, a)| *a)
    }
}

/// A parsed action plus the directives that were dropped and why.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub action: AgentAction,
    pub issues: Vec<String>,
}

impl ParseOutcome {
    pub fn has_directives(&self) -> bool {
        !self.action.messages.is_empty() || !self.issues.is_empty()
    }
}

pub fn is_directive(line: &str) -> bool {
    let l = line.trim_start();
    l.starts_with("SEND_TO") || l.starts_with("SEND_GROUP") || l.starts_with("SEND_ALL")
}

/// Parses raw model text. Text without directives is a silent action.
pub fn fc_parse(raw: &str, ctx: &ParseContext) -> Result<ParseOutcome, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut thought = Vec::new();
    let mut messages = Vec::new();
    let mut issues = Vec::new();

    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !is_directive(line) {
            let l = line.strip_prefix("THOUGHT:").map(str::trim).unwrap_or(line);
            if !l.is_empty() {
                thought.push(l.to_string());
            }
            continue;
        }
        match parse_directive(line, ctx) {
            Ok(msg) if messages.len() < MESSAGE_BUDGET => messages.push(msg),
            Ok(_) => issues.push(format!("over the {MESSAGE_BUDGET}-message budget: {line}")),
            Err(why) => issues.push(format!("{why}: {line}")),
        }
    }
    Ok(ParseOutcome {
        action: AgentAction {
            thought: thought.join("\n"),
            messages,
        },
        issues,
    })
}

fn parse_directive(line: &str, ctx: &ParseContext) -> Result<OutgoingMessage, String> {
    let body = |s: &str| -> Result<String, String> {
        let b = s.trim();
        if b.is_empty() {
            Err("empty message body".into())
        } else {
            Ok(b.to_string())
        }
    };
    let channel;
    let text;
    if let Some(c) = SEND_GROUP.captures(line) {
        let mut participants = BTreeSet::new();
        for tok in c[1].split(',').filter(|t| !t.trim().is_empty()) {
            let a = ctx
                .resolve(tok)
                .ok_or_else(|| format!("unknown participant {:?}", tok.trim()))?;
            participants.insert(a);
        }
        participants.insert(ctx.sender);
        channel = Channel::Group { participants };
        text = body(&c[2])?;
    } else if let Some(c) = SEND_TO.captures(line) {
        let to = ctx
            .resolve(&c[1])
            .ok_or_else(|| format!("unknown recipient {:?}", c[1].trim()))?;
        channel = Channel::Bilateral { to };
        text = body(&c[2])?;
    } else if let Some(c) = SEND_ALL.captures(line) {
        channel = Channel::Global;
        text = body(&c[1])?;
    } else {
        return Err("malformed directive".into());
    }
    channel
        .validate(ctx.sender, ctx.n_agents)
        .map_err(|e| e.to_string())?;
    Ok(OutgoingMessage {
        channel,
        body: text,
        tag: None,
    })
}

/// Renders an action in the directive grammar using `person_k` names.
/// Participants of a group exclude the sender, who is implied.
pub fn render(action: &AgentAction, sender: AgentId) -> String {
    let mut out: Vec<String> = action
        .thought
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.to_string())
        .collect();
    for m in &action.messages {
        let line = match &m.channel {
            Channel::Bilateral { to } => format!("SEND_TO {to}: {}", m.body),
            Channel::Group { participants } => {
                let names: Vec<String> = participants
                    .iter()
                    .filter(|a| **a != sender)
                    .map(|a| a.to_string())
                    .collect();
                format!("SEND_GROUP {}: {}", names.join(","), m.body)
            }
            Channel::Global => format!("SEND_ALL: {}", m.body),
        };
        out.push(line);
    }
    out.join("\n")
}
