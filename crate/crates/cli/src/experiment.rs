//! Grid experiment runner: for each (horizon, columns-per-day) cell, fit
//! the boosted model, a plain single-solve completion, and a persistence
//! baseline, then score every method per sensor.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::Serialize;

use ekmc_core::{
    build_windows, ekmc_fit, generate_synthetic, gram, ingest_csv, m1_distance, mae, predict,
    solve, threshold_predictions, Error as CoreError, IngestOptions, JointProblem,
    OccupancySeries, StepSignal, WindowConfig,
};

use crate::config::ExperimentConfig;

/// Forecasting method a result row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmc,
    Ekmc,
    Persistence,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Kmc => write!(f, "kmc"),
            Method::Ekmc => write!(f, "ekmc"),
            Method::Persistence => write!(f, "persistence"),
        }
    }
}

/// One scored (grid cell, method, metric, sensor) combination.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub sensor_id: String,
    pub horizon: i64,
    pub dt: usize,
    pub method: Method,
    pub metric: String,
    pub value: f64,
    pub wall_time_ms: u128,
    pub seed: u64,
}

/// A grid cell that could not be evaluated.
#[derive(Clone, Debug)]
pub struct CellFailure {
    pub horizon: i64,
    pub dt: usize,
    pub message: String,
}

/// Everything a grid run produces.
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
    pub results_csv: PathBuf,
    pub timings_csv: PathBuf,
    pub table_txt: PathBuf,
    pub manifest_json: PathBuf,
}

/// Loads or generates the occupancy streams named by the config.
pub fn load_series(cfg: &ExperimentConfig) -> Result<Vec<OccupancySeries>> {
    match cfg.data.source.as_str() {
        "synthetic" => Ok(generate_synthetic(&cfg.data.synthetic)?),
        "csv" => {
            let path = cfg.data.path.as_ref().context("data.path missing")?;
            let opts = IngestOptions {
                timezone_offset: cfg.data.timezone_offset,
                max_gap: cfg.data.max_gap,
            };
            Ok(ingest_csv(path, &opts)?)
        }
        other => anyhow::bail!("unknown data source {other:?}"),
    }
}

/// Latest anchor for which every sensor still has truth `horizon` seconds
/// ahead.
pub fn default_anchor(series: &[OccupancySeries], max_horizon: i64) -> i64 {
    let data_end = series.iter().map(|s| s.end()).min().unwrap_or(0);
    data_end - max_horizon
}

/// Window config for one grid cell.
pub fn cell_window(cfg: &ExperimentConfig, sensors: usize, horizon: i64, t: usize) -> WindowConfig {
    WindowConfig {
        sensors,
        lag: cfg.window.lag,
        horizon,
        columns_per_day: t,
        days_per_week: cfg.window.days_per_week,
        weeks: cfg.window.weeks,
        test_columns: cfg.window.test_columns,
        timezone_offset: cfg.data.timezone_offset,
    }
}

/// Ground truth for the test block: each test column's output, `horizon`
/// seconds after its most recent input sample.
pub fn truth_matrix(
    series: &[OccupancySeries],
    problem: &JointProblem,
) -> std::result::Result<Array2<u8>, CoreError> {
    let n = problem.outputs();
    let t2 = problem.test_cols();
    let horizon = problem.config().horizon;
    let mut truth = Array2::zeros((n, t2));
    for j in 0..t2 {
        let t = problem.test_column_time(j) + horizon;
        for (i, s) in series.iter().enumerate() {
            truth[(i, j)] = s.value_at(t).ok_or_else(|| CoreError::Coverage {
                sensor: s.sensor_id().to_string(),
                timestamp: t,
            })?;
        }
    }
    Ok(truth)
}

/// Persistence baseline: predicts each test column's current value.
pub fn persistence_prediction(
    series: &[OccupancySeries],
    problem: &JointProblem,
) -> std::result::Result<Array2<u8>, CoreError> {
    let n = problem.outputs();
    let t2 = problem.test_cols();
    let mut pred = Array2::zeros((n, t2));
    for j in 0..t2 {
        let t = problem.test_column_time(j);
        for (i, s) in series.iter().enumerate() {
            pred[(i, j)] = s.value_at(t).ok_or_else(|| CoreError::Coverage {
                sensor: s.sensor_id().to_string(),
                timestamp: t,
            })?;
        }
    }
    Ok(pred)
}

/// Per-sensor accuracy rows for one binary prediction.
fn score(
    cfg: &ExperimentConfig,
    problem: &JointProblem,
    truth: &Array2<u8>,
    prediction: &Array2<u8>,
    method: Method,
    wall_time_ms: u128,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let sensor_ids = problem.sensor_ids();
    let make_row = |sensor: usize, metric: &str, value: f64| ResultRow {
        sensor_id: sensor_ids[sensor].clone(),
        horizon: problem.config().horizon,
        dt: problem.train_cols(),
        method,
        metric: metric.to_string(),
        value,
        wall_time_ms,
        seed: cfg.solver.seed,
    };
    for kind in &cfg.metrics.kinds {
        match kind.as_str() {
            "mae" => {
                let errors = mae(truth, prediction)?;
                for (i, e) in errors.iter().enumerate() {
                    rows.push(make_row(i, "one_minus_mae", 1.0 - e));
                }
            }
            "m1" => {
                for i in 0..truth.nrows() {
                    let a = StepSignal::from_row(truth, i)?;
                    let b = StepSignal::from_row(prediction, i)?;
                    let d = m1_distance(&a, &b, cfg.metrics.m1_resolution)?;
                    rows.push(make_row(i, "one_minus_m1", 1.0 - d));
                }
            }
            other => anyhow::bail!("unknown metric {other:?}"),
        }
    }
    Ok(rows)
}

/// Fits and scores all three methods on one grid cell.
pub fn run_cell(
    cfg: &ExperimentConfig,
    series: &[OccupancySeries],
    anchor: i64,
    horizon: i64,
    t: usize,
) -> Result<Vec<ResultRow>> {
    let window = cell_window(cfg, series.len(), horizon, t);
    let problem = build_windows(series, anchor, &window)?;
    let kernel = cfg.kernel.to_spec(window.input_rows())?;
    let g = gram(&kernel, problem.train_inputs(), problem.test_inputs())?;
    let truth = truth_matrix(series, &problem)?;
    let ensemble_cfg = cfg.ensemble.resolve(&problem)?;

    let start = Instant::now();
    let (factors, _) = solve(&problem, &g, &cfg.solver, None)?;
    let kmc_prediction = threshold_predictions(&predict(&factors), &ensemble_cfg.threshold)?;
    let kmc_ms = start.elapsed().as_millis();

    let start = Instant::now();
    let ekmc_prediction = match ekmc_fit(&problem, &g, &cfg.solver, &ensemble_cfg) {
        Ok(model) => model.thresholded,
        // A degenerate ensemble still carries its single-round prediction.
        Err(CoreError::DegenerateEnsemble { epsilon, fallback }) => {
            log::warn!(
                "h={horizon} t={t}: first round weak (eps {epsilon:.3}); using its prediction"
            );
            threshold_predictions(&fallback, &ensemble_cfg.threshold)?
        }
        Err(other) => return Err(other.into()),
    };
    let ekmc_ms = start.elapsed().as_millis();

    let start = Instant::now();
    let persistence = persistence_prediction(series, &problem)?;
    let persistence_ms = start.elapsed().as_millis();

    let mut rows = Vec::new();
    rows.extend(score(cfg, &problem, &truth, &kmc_prediction, Method::Kmc, kmc_ms)?);
    rows.extend(score(cfg, &problem, &truth, &ekmc_prediction, Method::Ekmc, ekmc_ms)?);
    rows.extend(score(
        cfg,
        &problem,
        &truth,
        &persistence,
        Method::Persistence,
        persistence_ms,
    )?);
    Ok(rows)
}

/// Runs the whole grid and writes the result artifacts.
///
/// The results CSV is byte-deterministic for a fixed config and seed: rows
/// are ordered by cell key regardless of scheduling, and wall times live in
/// the separate timings CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let series = load_series(cfg)?;
    let max_horizon = *cfg.window.horizons.iter().max().expect("non-empty grid");
    let anchor = cfg
        .window
        .anchor
        .unwrap_or_else(|| default_anchor(&series, max_horizon));

    let mut cells: Vec<(i64, usize)> = Vec::new();
    for &h in &cfg.window.horizons {
        for &t in &cfg.window.columns_per_day {
            cells.push((h, t));
        }
    }
    cells.sort_unstable();
    cells.dedup();

    let jobs = cfg.output.jobs.max(1);
    let outcomes: Vec<((i64, usize), Result<Vec<ResultRow>>)> = if jobs == 1 {
        cells
            .iter()
            .map(|&(h, t)| ((h, t), run_cell(cfg, &series, anchor, h, t)))
            .collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?;
        pool.install(|| {
            cells
                .par_iter()
                .map(|&(h, t)| ((h, t), run_cell(cfg, &series, anchor, h, t)))
                .collect()
        })
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((h, t), outcome) in outcomes {
        match outcome {
            Ok(cell_rows) => rows.extend(cell_rows),
            Err(err) => failures.push(CellFailure {
                horizon: h,
                dt: t * cfg.window.days_per_week * cfg.window.weeks,
                message: err.to_string(),
            }),
        }
    }

    fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let results_csv = cfg.output.dir.join("results.csv");
    let timings_csv = cfg.output.dir.join("timings.csv");
    let table_txt = cfg.output.dir.join("table.txt");
    let manifest_json = cfg.output.dir.join("manifest.json");

    write_results_csv(&results_csv, &rows, &failures)?;
    write_timings_csv(&timings_csv, &rows)?;
    write_table(&table_txt, cfg, &rows)?;
    write_manifest(&manifest_json, cfg, anchor, &series)?;

    Ok(ExperimentOutcome {
        rows,
        failures,
        results_csv,
        timings_csv,
        table_txt,
        manifest_json,
    })
}

fn write_results_csv(path: &PathBuf, rows: &[ResultRow], failures: &[CellFailure]) -> Result<()> {
    let mut out = String::from("sensor_id,h,dt,method,metric,value,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sensor_id, r.horizon, r.dt, r.method, r.metric, r.value, r.seed
        ));
    }
    for f in failures {
        out.push_str(&format!("*,{},{},none,error,NaN,0\n", f.horizon, f.dt));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_timings_csv(path: &PathBuf, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::from("h,dt,method,wall_time_ms,seed\n");
    let mut seen = std::collections::BTreeSet::new();
    for r in rows {
        if seen.insert((r.horizon, r.dt, r.method)) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.horizon, r.dt, r.method, r.wall_time_ms, r.seed
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Human-readable summary: one DT x H grid of sensor-mean values per
/// (method, metric).
fn write_table(path: &PathBuf, cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<()> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(Method, String), BTreeMap<(usize, i64), (f64, usize)>> =
        BTreeMap::new();
    for r in rows {
        let cell = groups.entry((r.method, r.metric.clone())).or_default();
        let slot = cell.entry((r.dt, r.horizon)).or_insert((0.0, 0));
        slot.0 += r.value;
        slot.1 += 1;
    }
    let mut f = fs::File::create(path)?;
    let horizons: Vec<i64> = {
        let mut h = cfg.window.horizons.clone();
        h.sort_unstable();
        h.dedup();
        h
    };
    for ((method, metric), cells) in &groups {
        writeln!(f, "{method} / {metric} (mean over sensors)")?;
        write!(f, "{:>8}", "DT\\H")?;
        for h in &horizons {
            write!(f, "{h:>10}")?;
        }
        writeln!(f)?;
        let dts: Vec<usize> = {
            let mut d: Vec<usize> = cells.keys().map(|(dt, _)| *dt).collect();
            d.sort_unstable();
            d.dedup();
            d
        };
        for dt in dts {
            write!(f, "{dt:>8}")?;
            for h in &horizons {
                match cells.get(&(dt, *h)) {
                    Some((sum, count)) => write!(f, "{:>10.4}", sum / *count as f64)?,
                    None => write!(f, "{:>10}", "-")?,
                }
            }
            writeln!(f)?;
        }
        writeln!(f)?;
    }
    Ok(())
}

fn write_manifest(
    path: &PathBuf,
    cfg: &ExperimentConfig,
    anchor: i64,
    series: &[OccupancySeries],
) -> Result<()> {
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.digest(),
        "seed": cfg.solver.seed,
        "anchor": anchor,
        "sensors": series.iter().map(|s| s.sensor_id()).collect::<Vec<_>>(),
    });
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
