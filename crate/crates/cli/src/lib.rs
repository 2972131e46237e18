//! Experiment orchestration for the forecasting library: config file
//! handling, the grid experiment runner, model persistence, and solver
//! timing. The `ekmc` binary is a thin command-line wrapper over this
//! crate.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod model;

pub use config::{parse_threshold, ExperimentConfig};
pub use experiment::{
    default_anchor, load_series, run_experiment, CellFailure, ExperimentOutcome, Method,
    ResultRow,
};
pub use model::{dump_features, fit_single_cell, write_predictions, SavedModel};
