//! Experiment orchestration: configs, runs, sweeps and report emission.
//!
//! A run writes `<output_dir>/<config-hash>/` containing `rounds.csv`,
//! `attack.json`, `config.cfg`, `result.json` and `figures/*.csv`. Every file
//! carries the config hash, either as a column, a JSON field or a leading
//! `# config_hash=...` line.

pub mod config;
mod experiment;
mod output;
mod report;

pub use config::{
    load_config, parse_config, AttackSettings, ConfigError, DatasetSpec, ExperimentConfig, SplitSizes,
    TrainSettings,
};
pub use experiment::{
    execute, load_dataset, prepare_data, run_experiment, run_experiment_with, run_sweep, run_sweep_with,
    write_run, ExperimentData, Provenance, RunOptions, RunResult, SweepResult,
};
pub use output::{atomic_write, rounds_csv, ROUNDS_HEADER};
pub use report::{load_results, write_report, ConfigSummary, ReportSummary};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
