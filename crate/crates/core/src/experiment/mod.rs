//! Scenario simulation harness.

pub mod config;
pub mod runner;

pub use config::{table1, ExperimentConfig, MethodSpec, ScenarioConfig, SCHEMA_VERSION};
pub use runner::{
    replication_seed, run_experiment, run_replication, simulate, ReplicationRow, RunOptions, SummaryRow,
    REPLICATIONS_FILE, SUMMARY_FILE,
};
