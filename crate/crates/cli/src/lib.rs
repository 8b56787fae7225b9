//! Configuration-driven experiment driver: generate a topology, train its
//! nodes, unlearn with FIUn and the baselines, evaluate, and compare.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_str, ExperimentConfig, MethodName};
pub use run::{run_experiment, Layout, Overrides, RunSummary, Stage, StageError};
