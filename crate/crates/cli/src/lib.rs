//! Experiment driver: loads a TOML config, runs the solver and simulator
//! pipelines and writes CSV/JSON tables.

pub mod config;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use output::{promote, Artifact, Artifacts};
pub use run::{run_task, Task};
