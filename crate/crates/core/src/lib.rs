//! Deterministic multi-agent workplace simulation with peer evaluation and
//! stereotype metrics.
//!
//! A run alternates task episodes (assignment, success or failure, outcome
//! broadcast) with interaction among agents whose messages reach peers one
//! episode later. At the end of each phase every agent assesses every peer;
//! the parsed assessments become person-job mappings and feed the RSI, GBC,
//! CAI and SII indices.

pub mod ablation;
pub mod agents;
pub mod batch;
pub mod config;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod metrics;
pub mod rng;
pub mod runlog;
pub mod supervisor;
pub mod types;
