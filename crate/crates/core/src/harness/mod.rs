//! Experiment configuration, sweeps, training experiments, selection and
//! report emission.

mod config;
mod demo;
mod experiment;
mod rows;
mod select;
mod sweep;

pub use config::{Arm, ExperimentConfig, WeightGrid, DEFAULT_CONFIG_TOML, EXPERIMENT_SCHEMA};
pub use demo::{demo_fig3, write_demo_lines, write_demo_points, DecisionLine, DemoConfig, DemoOutput, DemoPoint};
pub use experiment::{
    meta_json, run_training_experiment, write_experiment, AggregateRow, Candidate, ExperimentResult, RunRecord,
    SelectedConfig, META_SCHEMA,
};
pub use rows::{write_rows, ResultRow};
pub use select::{grid_select, Criterion, Selection, SelectionRow};
pub use sweep::run_sweep;
