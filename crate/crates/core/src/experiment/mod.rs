//! Experiment harness: configuration and presets, trial generation, the
//! method x SNR x particle-count x trial grid, RMSE summaries and CSV export.

mod config;
mod export;
mod grid;
mod metrics;

pub use config::{
    ActivitySpec, ArraySpec, BinghamSpec, BirthSpec, ExperimentConfig, FilterSpec, Interval, Method, StftSpec,
    SynthSpec, TruthSpec,
};
pub use export::{export_plotdata, write_particles_csv, write_trajectory_csv, PlotFiles};
pub use grid::{
    generate_trial, load_results, load_trials, result_stem, run_grid, run_single, run_seed, trial_seed, RunResult,
    TrialData, TrialRecord,
};
pub use metrics::{median, rmse, summarize, CellSummary, Summary};
