//! Per-sweep solver timing across training-column counts.
//!
//! The coordinate-descent sweep is dominated by the Gram-times-coefficients
//! product, so wall time should scale roughly quadratically in the column
//! count at fixed rank. The `benchmark` subcommand measures that directly.

use std::time::Instant;

use anyhow::Result;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ekmc_core::{
    gram, init_factors, FactorDims, JointProblem, KernelSpec, KmcSolver, SolverConfig,
    WindowConfig,
};

/// Random binary completion instance with bare dimensions (no day
/// structure); used by benchmarks and the acceptance suite.
pub fn random_binary_problem(
    sensors: usize,
    lag: usize,
    train_cols: usize,
    test_cols: usize,
    seed: u64,
) -> Result<JointProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bin = |rows: usize, cols: usize| {
        Array2::from_shape_fn((rows, cols), |_| f64::from(rng.random::<bool>()))
    };
    let y_tr = bin(sensors, train_cols);
    let x_tr = bin(sensors * lag, train_cols);
    let x_te = bin(sensors * lag, test_cols);
    let config = WindowConfig {
        sensors,
        lag,
        horizon: 1,
        columns_per_day: train_cols,
        days_per_week: 1,
        weeks: 1,
        test_columns: test_cols,
        timezone_offset: 0,
    };
    Ok(JointProblem::from_parts(y_tr, x_tr, x_te, config)?)
}

/// Median per-sweep wall time for one training-column count.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub train_cols: usize,
    pub median_sweep_ms: f64,
}

/// Times `repeats` solver sweeps (after one warmup) per column count and
/// reports the median.
pub fn time_sweeps(
    train_col_counts: &[usize],
    sensors: usize,
    lag: usize,
    test_cols: usize,
    rank: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(train_col_counts.len());
    for &t1 in train_col_counts {
        let problem = random_binary_problem(sensors, lag, t1, test_cols, seed)?;
        let spec = KernelSpec::default_rbf(sensors * lag);
        let g = gram(&spec, problem.train_inputs(), problem.test_inputs())?;
        let cfg = SolverConfig {
            rank,
            lambda: 1.0,
            max_sweeps: 1,
            tol: 0.0,
            seed,
        };
        let solver = KmcSolver::new(&problem, &g, &cfg, None)?;
        let mut factors = init_factors(&cfg, &FactorDims::of(&problem));
        solver.sweep(&mut factors)?; // warmup
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            solver.sweep(&mut factors)?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            train_cols: t1,
            median_sweep_ms: times[times.len() / 2],
        });
    }
    Ok(rows)
}
