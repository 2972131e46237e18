//! Saving fitted models and dumping their pieces as CSV matrices.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use ekmc_core::{
    build_windows, ekmc_fit, gram, EnsembleModel, FactorState, OccupancySeries, WindowConfig,
};

use crate::config::ExperimentConfig;
use crate::experiment::{default_anchor, load_series, truth_matrix};

/// A fitted single-cell model, serialized as JSON.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: String,
    pub config_hash: String,
    pub horizon: i64,
    pub columns_per_day: usize,
    pub anchor: i64,
    pub sensor_ids: Vec<String>,
    /// Factor blocks of the last retained round.
    pub factors: FactorState,
    pub round_epsilons: Vec<f64>,
    pub round_betas: Vec<f64>,
    pub final_weights: Vec<f64>,
    /// Combined (raw) test prediction, sensors x test columns.
    pub combined: Array2<f64>,
    /// Thresholded test prediction.
    pub thresholded: Array2<u8>,
}

impl SavedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fits one grid cell and packages the result for saving.
pub fn fit_single_cell(
    cfg: &ExperimentConfig,
    series: &[OccupancySeries],
    horizon: i64,
    columns_per_day: usize,
) -> Result<(SavedModel, EnsembleModel, WindowConfig)> {
    let window = crate::experiment::cell_window(cfg, series.len(), horizon, columns_per_day);
    let max_horizon = *cfg.window.horizons.iter().max().unwrap_or(&horizon);
    let anchor = cfg
        .window
        .anchor
        .unwrap_or_else(|| default_anchor(series, max_horizon.max(horizon)));
    let problem = build_windows(series, anchor, &window)?;
    let kernel = cfg.kernel.to_spec(window.input_rows())?;
    let g = gram(&kernel, problem.train_inputs(), problem.test_inputs())?;
    let ensemble_cfg = cfg.ensemble.resolve(&problem)?;
    let model = ekmc_fit(&problem, &g, &cfg.solver, &ensemble_cfg)?;
    let saved = SavedModel {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.digest(),
        horizon,
        columns_per_day,
        anchor,
        sensor_ids: problem.sensor_ids().to_vec(),
        factors: model.final_factors.clone(),
        round_epsilons: model.epsilons(),
        round_betas: model.betas(),
        final_weights: model.final_weights.to_vec(),
        combined: model.combined.clone(),
        thresholded: model.thresholded.clone(),
    };
    Ok((saved, model, window))
}

/// Writes a matrix as CSV with the given column header.
pub fn write_matrix_csv<T: std::fmt::Display + Copy>(
    path: &Path,
    header: &[String],
    matrix: &Array2<T>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn feature_header(rank: usize) -> Vec<String> {
    (1..=rank).map(|i| format!("f{i}")).collect()
}

/// Writes the model's raw and thresholded predictions, time down the rows
/// and one column per sensor.
pub fn write_predictions(model: &SavedModel, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let header = model.sensor_ids.clone();
    let raw_path = dir.join("prediction.csv");
    write_matrix_csv(&raw_path, &header, &model.combined.t().to_owned())?;
    let bin_path = dir.join("prediction_binary.csv");
    write_matrix_csv(&bin_path, &header, &model.thresholded.t().to_owned())?;
    Ok((raw_path, bin_path))
}

/// Dumps the interpretability view: test-column features, output-row
/// coefficients, predictions, and aligned ground truth.
pub fn dump_features(cfg: &ExperimentConfig, model: &SavedModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let rank = model.factors.test_factor.ncols();
    write_matrix_csv(
        &dir.join("v_te.csv"),
        &feature_header(rank),
        &model.factors.test_factor,
    )?;
    write_matrix_csv(
        &dir.join("u_tr.csv"),
        &feature_header(rank),
        &model.factors.output_factor,
    )?;
    write_predictions(model, dir)?;

    let series = load_series(cfg)?;
    let window = crate::experiment::cell_window(
        cfg,
        series.len(),
        model.horizon,
        model.columns_per_day,
    );
    let problem = build_windows(&series, model.anchor, &window)?;
    let truth = truth_matrix(&series, &problem)?;
    write_matrix_csv(
        &dir.join("truth.csv"),
        &model.sensor_ids,
        &truth.t().to_owned(),
    )?;
    Ok(())
}
