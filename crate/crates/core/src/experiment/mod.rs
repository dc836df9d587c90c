//! Headless comparison of agent variants against the synthetic user.

mod export;
mod metrics;
mod runner;
mod spec;

pub use export::{export, read_records, write_panels, PANEL_FILES};
pub use metrics::{mean_steps, EpisodeRecord, RunMetrics, RunSummary, VariantTotals};
pub use runner::{
    execution_order, new_trial, play_episode, run_cell, run_episode, run_experiment, run_experiment_parallel,
    run_seeds, ExperimentResult,
};
pub use spec::ExperimentSpec;
