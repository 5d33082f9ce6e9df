//! Contextual linear bandits for dose-level prediction.
//!
//! The crate covers the whole evaluation loop: a patient cohort is parsed
//! and encoded ([`dataset`]), a policy ([`policies`]) chooses one of three
//! dose levels for each patient served by an environment ([`environment`]),
//! and the [`harness`] turns repeated shuffled episodes into accuracy and
//! regret curves with confidence bands. [`cli`] wires it to config files
//! and CSV exports.

pub mod cli;
pub mod dataset;
pub mod environment;
pub mod harness;
pub mod linalg;
pub mod policies;

pub use dataset::{DoseLevel, EncodedPatient, FeatureSet, PatientRecord};
pub use environment::{Environment, ReplayEnvironment, SyntheticEnvironment, SyntheticSpec};
pub use harness::{aggregate, run_episode, EpisodeTrace, Metric, MetricSeries, Window};
pub use policies::{make_policy, Algorithm, Policy, PolicyConfig, RewardStructure};
