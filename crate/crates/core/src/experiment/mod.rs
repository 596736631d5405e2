//! Scenario configuration and the replicated simulation study.

pub mod config;
pub mod runner;

pub use config::{DummyCount, Process, ScenarioConfig};
pub use runner::{
    read_replicates, resummarize, run_scenario, scenario_covariates, scenario_intensity, simulate_replicate,
    summarize, CriterionSummary, ReplicateRecord, StudySummary,
};
