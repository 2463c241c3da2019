//! Experiment runner, file formats and CLI plumbing on top of
//! `recall-gym-core`.

pub mod config;
pub mod document;
pub mod error;
pub mod pipeline;
pub mod runner;
pub mod suites;

pub use config::{preset, EvalPlan, ExperimentConfig, Preset, TrainSubset, TrainerKind, WorldSpec, PRESET_NAMES};
pub use document::{Checkpoint, UniverseDocument, SCHEMA_VERSION};
pub use error::{Error, Result};
pub use pipeline::{run_seed, SeedReport, SeedRun, SeedWorld};
pub use runner::{execute, run_experiment, run_experiment_file, validate_run, RunOutput, RunSummary};
pub use suites::{reproduce, SuiteOptions, SuiteReport, SUITES};
