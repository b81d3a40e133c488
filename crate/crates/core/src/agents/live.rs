//! LLM-backed player agent.
//!
//! The player completion is first read with the rule grammar. When it holds
//! no directive and the fc_caller is in LLM mode, a second call converts the
//! free text into JSON; a schema violation gets one re-ask before the agent
//! is treated as silent.

use std::sync::Arc;

use serde::Deserialize;

use super::fc::{fc_parse, ParseContext, ParseError};
use super::llm::{ChatMessage, LlmClient};
use super::prompt::{build_system_prompt, render_events, AGENT_TURN, ASSESSMENT, FC_CALLER};
use super::{
    AgentAction, AgentBackend, AssessmentRequest, Observation, OutgoingMessage, Reaction, RunInfo,
};
use crate::config::FcCallerMode;
use crate::error::BackendError;
use crate::types::{AgentId, Channel};

pub struct LlmAgent {
    agent: AgentId,
    info: Arc<RunInfo>,
    client: LlmClient,
    fc_mode: FcCallerMode,
    system_prompt: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FcJson {
    #[serde(default)]
    thought: String,
    messages: Vec<FcJsonMessage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FcJsonMessage {
    channel: String,
    #[serde(default)]
    targets: Vec<String>,
    body: String,
}

impl LlmAgent {
    pub fn new(
        agent: AgentId,
        info: Arc<RunInfo>,
        client: LlmClient,
        fc_mode: FcCallerMode,
    ) -> Self {
        let profile = &info.profiles[(agent.0 - 1) as usize];
        let system_prompt = build_system_prompt(profile, &info);
        LlmAgent {
            agent,
            info,
            client,
            fc_mode,
            system_prompt,
        }
    }

    fn parse_context(&self) -> ParseContext {
        ParseContext::new(self.agent, self.info.n_agents).with_names(
            self.info
                .profiles
                .iter()
                .map(|p| (p.display_name.as_str(), p.agent)),
        )
    }

    fn roster(&self) -> String {
        self.info
            .profiles
            .iter()
            .map(|p| p.display_name.clone())
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn task_list(&self) -> String {
        self.info
            .tasks
            .iter()
            .map(|t| t.id.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Turns a player completion into an action.
    pub fn interpret(&self, raw: &str) -> Result<Reaction, BackendError> {
        let ctx = self.parse_context();
        let out = match fc_parse(raw, &ctx) {
            Ok(out) => out,
            Err(ParseError::Empty) => {
                return Ok(Reaction {
                    action: AgentAction::silent(""),
                    issues: vec!["empty completion".into()],
                })
            }
        };
        if out.has_directives() || self.fc_mode == FcCallerMode::Rule {
            return Ok(Reaction {
                action: out.action,
                issues: out.issues,
            });
        }
        self.fc_caller_llm(raw, &ctx)
    }

    fn fc_caller_llm(&self, raw: &str, ctx: &ParseContext) -> Result<Reaction, BackendError> {
        let prompt = FC_CALLER.render(&[
            ("sender", &self.info.display_name(self.agent)),
            ("roster", &self.roster()),
            ("raw", raw),
        ]);
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut last_err = String::new();
        for _ in 0..2 {
            let reply = self.client.chat(messages.clone())?;
            match self.decode_fc_json(&reply, ctx) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    last_err = e.clone();
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "That was not valid ({e}). Output only the JSON object."
                    )));
                }
            }
        }
        Ok(Reaction {
            action: AgentAction::silent(raw.trim()),
            issues: vec![format!(
                "fc_caller schema violation after re-ask: {last_err}"
            )],
        })
    }

    fn decode_fc_json(&self, reply: &str, ctx: &ParseContext) -> Result<Reaction, String> {
        let json = extract_json_object(reply).ok_or("no JSON object")?;
        let parsed: FcJson = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut issues = Vec::new();
        let mut msgs = Vec::new();
        for m in parsed.messages {
            let resolve = |t: &String| {
                ctx.resolve(t)
                    .ok_or_else(|| format!("unknown participant {t:?}"))
            };
            let channel = match m.channel.as_str() {
                "all" => Ok(Channel::Global),
                "to" if m.targets.len() == 1 => {
                    resolve(&m.targets[0]).map(|to| Channel::Bilateral { to })
                }
                "group" => m
                    .targets
                    .iter()
                    .map(resolve)
                    .collect::<Result<std::collections::BTreeSet<_>, _>>()
                    .map(|mut participants| {
                        participants.insert(self.agent);
                        Channel::Group { participants }
                    }),
                other => Err(format!(
                    "bad channel {other:?} with {} targets",
                    m.targets.len()
                )),
            };
            match channel {
                Ok(channel) if !m.body.trim().is_empty() => msgs.push(OutgoingMessage {
                    channel,
                    body: m.body.trim().to_string(),
                    tag: None,
                }),
                Ok(_) => issues.push("empty message body".into()),
                Err(e) => issues.push(e),
            }
        }
        Ok(Reaction {
            action: AgentAction {
                thought: parsed.thought,
                messages: msgs,
            },
            issues,
        })
    }
}

/// The outermost `{...}` span of `text`, tolerating code fences around it.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

impl AgentBackend for LlmAgent {
    fn kind(&self) -> &'static str {
        "llm_http"
    }

    fn react(&self, obs: &Observation) -> Result<Reaction, BackendError> {
        let turn = AGENT_TURN.render(&[
            ("episode", &obs.episode.to_string()),
            ("task", obs.own_assignment.as_str()),
            (
                "outcome",
                if obs.own_outcome.is_success() {
                    "success"
                } else {
                    "failure"
                },
            ),
            ("history", &render_events(&obs.visible_events, &self.info)),
        ]);
        let raw = self.client.chat(vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(turn),
        ])?;
        self.interpret(&raw)
    }

    fn assess(&self, req: &AssessmentRequest) -> Result<String, BackendError> {
        let prompt = ASSESSMENT.render(&[
            ("evaluator", &self.info.display_name(req.evaluator)),
            ("subject", &self.info.display_name(req.subject)),
            ("history", &render_events(&req.visible_events, &self.info)),
            ("task_list", &self.task_list()),
        ]);
        Ok(self.client.chat(vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(prompt),
        ])?)
    }

    fn system_prompt(&self) -> Option<&str> {
        Some(&self.system_prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_object_extraction() {
        assert_eq!(
            extract_json_object("```json\n{\"a\":1}\n```"),
            Some("{\"a\":1}")
        );
        assert_eq!(extract_json_object("nothing"), None);
    }
}
