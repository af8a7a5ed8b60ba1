//! Experiment harness: configuration, initial data, runs, sweeps and reports.

pub mod config;
pub mod initial;
pub mod oracle;
pub mod report;
pub mod runner;

pub use config::{C0Mode, Family, GridSpec, InitialDataSpec, RunConfig};
pub use runner::{compare_fw, run_single, run_sweep, simulate, RunOutput, RunResult};
