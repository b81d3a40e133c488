//! Paired neutral and demographic runs from one base config and seed.

use serde::{Deserialize, Serialize};

use crate::config::{DemographicProfile, SimConfig};
use crate::engine::{run_experiment, PartialRun};
use crate::runlog::{RunLog, RunSink};
use crate::types::{Event, ProfileMode};

/// The neutral and demographic variants of `base`; identical apart from the
/// profile mode and profiles.
pub fn ablation_configs(
    base: &SimConfig,
    profiles: Vec<DemographicProfile>,
) -> (SimConfig, SimConfig) {
    let mut neutral = base.clone();
    neutral.profile_mode = ProfileMode::Neutral;
    neutral.profiles = Vec::new();
    let mut demographic = base.clone();
    demographic.profile_mode = ProfileMode::Demographic;
    demographic.profiles = profiles;
    (neutral, demographic)
}

pub fn run_ablation(
    base: &SimConfig,
    profiles: Vec<DemographicProfile>,
    neutral_sink: &mut dyn RunSink,
    demographic_sink: &mut dyn RunSink,
) -> Result<(RunLog, RunLog), PartialRun> {
    let (neutral, demographic) = ablation_configs(base, profiles);
    let d = run_experiment(demographic, demographic_sink)?;
    let n = run_experiment(neutral, neutral_sink)?;
    Ok((n, d))
}

/// Task-outcome and system-notice events of a run, in order.
pub fn td_sn_stream(log: &RunLog) -> Vec<Event> {
    log.episodes
        .iter()
        .flat_map(|e| e.record.events.iter())
        .filter(|e| e.is_td() || e.is_sn())
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationManifest {
    pub seed: u64,
    pub neutral_log: String,
    pub demographic_log: String,
    /// Whether both runs produced the same Td/Sn event sequence.
    pub td_sn_identical: bool,
}
