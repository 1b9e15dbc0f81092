//! Experiment harness: config parsing, the cell runner, summary statistics
//! and the verification suites behind the `mctslab` binary.

pub mod config;
pub mod runner;
pub mod stats;
pub mod verify;

pub use config::{EnvSpec, ExperimentConfig, SearchSpec, Variant};
pub use runner::{run_experiment, write_outputs, ExperimentRecord, Outcome, OutputPaths};
pub use verify::{verify, Report, Suite, VerifyOptions};
