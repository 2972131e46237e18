//! Short-horizon forecasting of high-resolution (1 Hz, binary) multivariate
//! sensor streams.
//!
//! Prediction is cast as completion of a masked joint matrix that stacks
//! output columns over lagged input columns for both training and test
//! windows. The unknown test-output block is recovered by kernelized
//! low-rank factorization solved with four-block coordinate descent
//! ([`kmc`]), optionally wrapped in a boosting ensemble that reweights
//! hard-to-predict training columns ([`ekmc`]). Forecast quality is scored
//! per sensor by mean absolute error and by the Skorokhod M1 distance
//! between binary step signals ([`metrics`]).
//!
//! ```
//! use ekmc_core::{
//!     build_windows, ekmc_fit, generate_synthetic, gram, EnsembleConfig, KernelSpec,
//!     SolverConfig, SyntheticSpec, WindowConfig,
//! };
//!
//! let spec = SyntheticSpec { n_days: 8, ..SyntheticSpec::default() };
//! let series = generate_synthetic(&spec).unwrap();
//! let config = WindowConfig {
//!     sensors: 3,
//!     lag: 5,
//!     horizon: 10,
//!     columns_per_day: 20,
//!     days_per_week: 2,
//!     weeks: 1,
//!     test_columns: 30,
//!     timezone_offset: 0,
//! };
//! let anchor = series[0].end() - config.horizon;
//! let problem = build_windows(&series, anchor, &config).unwrap();
//! let g = gram(
//!     &KernelSpec::default_rbf(config.input_rows()),
//!     problem.train_inputs(),
//!     problem.test_inputs(),
//! )
//! .unwrap();
//! let solver = SolverConfig { rank: 8, max_sweeps: 10, ..SolverConfig::default() };
//! let model = ekmc_fit(&problem, &g, &solver, &EnsembleConfig::default()).unwrap();
//! assert_eq!(model.thresholded.dim(), (3, 30));
//! ```

pub mod data;
pub mod ekmc;
pub mod error;
pub mod kernels;
pub mod kmc;
mod linalg;
pub mod metrics;
pub mod problem;

pub use data::{
    generate_synthetic, ingest_csv, write_csv, EventLog, EventLogRow, IngestOptions,
    OccupancySeries, SyntheticSpec, SECONDS_PER_DAY,
};
pub use ekmc::{
    ekmc_fit, positive_rate_thresholds, threshold_predictions, training_error_bound,
    weighted_vote, EnsembleConfig, EnsembleModel, EnsembleRound, Threshold,
};
pub use error::{Error, Result};
pub use kernels::{gram, kernel_blocks, GramMatrix, KernelSpec};
pub use kmc::{
    init_factors, objective, predict, solve, FactorDims, FactorState, KmcSolver, SolveReport,
    SolverConfig,
};
pub use metrics::{
    completed_graph, m1_distance, m1_oracle, mae, ParametricPath, StepSignal, ORACLE_MAX_LEN,
};
pub use problem::{build_windows, flatten_joint, JointProblem, WindowConfig};
