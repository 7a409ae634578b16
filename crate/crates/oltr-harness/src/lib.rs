//! Experiment harness for the online-learning-to-rank laboratory:
//! configuration, seeded multi-run orchestration, sweeps over the reward
//! shaping axes, aggregation with significance tests, and CSV emission for
//! plotting.

pub mod config;
pub mod plots;
pub mod runner;

pub use config::{Cell, DataSource, ExperimentConfig, SweepAxes};
pub use plots::emit_plot_data;
pub use runner::{load_data, run_experiment, ExperimentSummary, LoadedData};
