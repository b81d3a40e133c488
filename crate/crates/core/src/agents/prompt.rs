//! Prompt templates, placeholder substitution and the neutral-vocabulary check.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

use super::RunInfo;
use crate::types::{AgentProfile, Channel, Event, EventPayload, ProfileMode};

/// A versioned prompt asset.
#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! template {
    ($ident:ident, $name:literal) => {
        pub const $ident: Template = Template {
            name: $name,
            text: include_str!(concat!("../../assets/prompts/", $name, ".txt")),
        };
    };
}

template!(AGENT_SYSTEM, "agent_system.v1");
template!(PROFILE_BLOCK, "profile_block.v1");
template!(AGENT_TURN, "agent_turn.v1");
template!(ASSESSMENT, "assessment.v1");
template!(BOSS, "boss.v1");
template!(FC_CALLER, "fc_caller.v1");
template!(PARSER, "parser.v1");
template!(QUAL_REPORT, "qual_report.v1");
template!(QUAL_FLAGS, "qual_flags.v1");

pub const ALL_TEMPLATES: &[Template] = &[
    AGENT_SYSTEM,
    PROFILE_BLOCK,
    AGENT_TURN,
    ASSESSMENT,
    BOSS,
    FC_CALLER,
    PARSER,
    QUAL_REPORT,
    QUAL_FLAGS,
];

impl Template {
    /// Substitutes `{{key}}` placeholders. Unknown keys are left in place.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.to_string();
        for (k, v) in vars {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        out
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

/// Template name -> SHA-256 of its text, recorded in every run log.
pub fn template_hashes() -> BTreeMap<String, String> {
    ALL_TEMPLATES
        .iter()
        .map(|t| (t.name.to_string(), t.sha256()))
        .collect()
}

static BLOCKLIST: LazyLock<BTreeSet<&'static str>> = LazyLock::new(|| {
    include_str!("../../assets/demographic_blocklist.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

pub fn demographic_blocklist() -> &'static BTreeSet<&'static str> {
    &BLOCKLIST
}

/// Blocklisted tokens found in `text` (lower-cased, whole-token match).
pub fn blocklist_hits(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|tok| BLOCKLIST.contains(tok))
        .map(str::to_string)
        .collect()
}

fn profile_line(p: &AgentProfile) -> String {
    format!(
        "- {}: {} years old, {}, {}",
        p.display_name,
        p.age.unwrap_or_default(),
        p.gender.as_deref().unwrap_or_default(),
        p.appearance.as_deref().unwrap_or_default()
    )
}

/// The system prompt of one agent.
///
/// Neutral profiles produce only the `person_k` identifier, the rules and the
/// channel descriptions. Demographic profiles add every participant's age,
/// gender and appearance verbatim.
pub fn build_system_prompt(profile: &AgentProfile, info: &RunInfo) -> String {
    let roster: Vec<&str> = info
        .profiles
        .iter()
        .map(|p| p.display_name.as_str())
        .collect();
    let tasks: Vec<&str> = info.tasks.iter().map(|t| t.id.as_str()).collect();
    let profile_block = match profile.mode {
        ProfileMode::Neutral => String::new(),
        ProfileMode::Demographic => {
            let lines: Vec<String> = info.profiles.iter().map(profile_line).collect();
            PROFILE_BLOCK.render(&[("profiles", &lines.join("\n"))])
        }
    };
    let n = info.n_agents.to_string();
    AGENT_SYSTEM
        .render(&[
            ("self_name", &profile.display_name),
            ("n_agents", &n),
            ("roster", &roster.join(", ")),
            ("task_list", &tasks.join(", ")),
            ("profile_block", &profile_block),
        ])
        .trim_end()
        .to_string()
}

static PERSON_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"person_(\d+)").unwrap());

/// Replaces `person_k` tokens with display names (no-op in neutral runs).
pub fn with_display_names(text: &str, info: &RunInfo) -> String {
    if info.profiles.iter().all(|p| p.mode == ProfileMode::Neutral) {
        return text.to_string();
    }
    PERSON_TOKEN
        .replace_all(text, |c: &regex::Captures| {
            c[1].parse::<u32>()
                .ok()
                .and_then(|i| info.profiles.get(i.wrapping_sub(1) as usize))
                .map(|p| p.display_name.clone())
                .unwrap_or_else(|| c[0].to_string())
        })
        .into_owned()
}

/// One line per event, as shown to a model.
pub fn render_events(events: &[Event], info: &RunInfo) -> String {
    if events.is_empty() {
        return "(nothing yet)".to_string();
    }
    let name = |a: crate::types::AgentId| info.display_name(a);
    let lines: Vec<String> = events
        .iter()
        .map(|e| match &e.payload {
            EventPayload::Td {
                agent,
                task,
                outcome,
            } => format!(
                "[round {}] {} worked as {}: {}",
                e.episode,
                name(*agent),
                task,
                if outcome.is_success() {
                    "success"
                } else {
                    "failure"
                }
            ),
            EventPayload::Sn { text } => {
                format!(
                    "[round {}] notice: {}",
                    e.episode,
                    with_display_names(text, info)
                )
            }
            EventPayload::Im {
                sender,
                channel,
                body,
                ..
            } => {
                let to = match channel {
                    Channel::Bilateral { to } => name(*to),
                    Channel::Group { participants } => {
                        let ns: Vec<String> = participants.iter().map(|a| name(*a)).collect();
                        format!("group({})", ns.join(", "))
                    }
                    Channel::Global => "everyone".to_string(),
                };
                format!(
                    "[round {}] {} -> {}: {}",
                    e.episode,
                    name(*sender),
                    to,
                    body
                )
            }
        })
        .collect();
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{quadrant_task_set, AgentId};

    fn info(profiles: Vec<AgentProfile>) -> RunInfo {
        RunInfo {
            n_agents: profiles.len() as u32,
            tasks: quadrant_task_set(),
            profiles,
            seed: 1,
        }
    }

    fn neutral(n: u32) -> RunInfo {
        info(AgentId::all(n).map(AgentProfile::neutral).collect())
    }

    #[test]
    fn neutral_prompt_names_agent_and_has_no_blocklist_tokens() {
        let info = neutral(4);
        let p = build_system_prompt(&info.profiles[2], &info);
        assert!(p.contains("person_3"));
        assert_eq!(blocklist_hits(&p), Vec::<String>::new());
    }

    #[test]
    fn templates_themselves_are_neutral() {
        for t in ALL_TEMPLATES {
            // the profile block only appears in demographic runs
            if t.name.starts_with("profile_block") {
                continue;
            }
            assert_eq!(blocklist_hits(t.text), Vec::<String>::new(), "{}", t.name);
        }
    }

    #[test]
    fn demographic_prompt_embeds_fields_verbatim() {
        let profiles = vec![
            AgentProfile::demographic(AgentId(1), "Andrew He", 28, "man", "glasses"),
            AgentProfile::demographic(
                AgentId(2),
                "Esperanza Morales",
                32,
                "woman",
                "long dark hair",
            ),
        ];
        let info = info(profiles);
        let p = build_system_prompt(&info.profiles[0], &info);
        for needle in ["Andrew He", "28", "man", "glasses", "long dark hair"] {
            assert!(p.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn prompt_is_pure() {
        let info = neutral(3);
        assert_eq!(
            build_system_prompt(&info.profiles[0], &info),
            build_system_prompt(&info.profiles[0], &info)
        );
    }

    #[test]
    fn blocklist_is_token_based() {
        assert!(blocklist_hits("other participants share the load").is_empty());
        assert_eq!(blocklist_hits("He is tall."), vec!["he", "tall"]);
    }

    #[test]
    fn display_names_substituted_only_in_demographic_runs() {
        let n = neutral(2);
        assert_eq!(with_display_names("person_1 did it", &n), "person_1 did it");
        let d = info(vec![
            AgentProfile::demographic(AgentId(1), "Ada", 40, "woman", "curly hair"),
            AgentProfile::demographic(AgentId(2), "Bo", 22, "man", "beard"),
        ]);
        assert_eq!(
            with_display_names("person_2 helped person_1", &d),
            "Bo helped Ada"
        );
    }
}
