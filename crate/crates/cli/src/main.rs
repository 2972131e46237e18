use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ekmc_cli::config::ExperimentConfig;
use ekmc_cli::{bench, experiment, model};

/// Short-horizon forecasting of 1 Hz binary sensor streams by kernelized
/// matrix completion with boosting.
#[derive(Parser)]
#[command(name = "ekmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config/CLI overrides shared by the data-driven subcommands.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Kernel kind: linear | rbf | polynomial.
    #[arg(long)]
    kernel: Option<String>,
    /// RBF width.
    #[arg(long)]
    gamma: Option<f64>,
    /// Polynomial degree.
    #[arg(long)]
    degree: Option<u32>,
    /// Polynomial offset.
    #[arg(long)]
    coef0: Option<f64>,
    /// Factor rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Regularization weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep cap per solve.
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Seed for factor initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Boosting round cap.
    #[arg(long)]
    rounds: Option<usize>,
    /// Error clamp floor.
    #[arg(long)]
    eps_min: Option<f64>,
    /// Binarization rule: fixed:<v> | per-column.
    #[arg(long)]
    threshold: Option<String>,
    /// Metrics to report: mae | m1 | both.
    #[arg(long)]
    metric: Option<String>,
    /// Sampling resolution of the M1 approximation.
    #[arg(long)]
    m1_resolution: Option<usize>,
    /// Parallel grid cells.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.kernel {
            cfg.kernel.kind = v.clone();
        }
        if let Some(v) = self.gamma {
            cfg.kernel.gamma = Some(v);
        }
        if let Some(v) = self.degree {
            cfg.kernel.degree = Some(v);
        }
        if let Some(v) = self.coef0 {
            cfg.kernel.coef0 = Some(v);
        }
        if let Some(v) = self.rank {
            cfg.solver.rank = v;
        }
        if let Some(v) = self.lambda {
            cfg.solver.lambda = v;
        }
        if let Some(v) = self.tol {
            cfg.solver.tol = v;
        }
        if let Some(v) = self.max_sweeps {
            cfg.solver.max_sweeps = v;
        }
        if let Some(v) = self.seed {
            cfg.solver.seed = v;
        }
        if let Some(v) = self.rounds {
            cfg.ensemble.max_rounds = v;
        }
        if let Some(v) = self.eps_min {
            cfg.ensemble.eps_min = v;
        }
        if let Some(v) = &self.threshold {
            cfg.ensemble.threshold = v.clone();
        }
        if let Some(v) = &self.metric {
            cfg.metrics.kinds = match v.as_str() {
                "both" => vec!["mae".into(), "m1".into()],
                other => vec![other.to_string()],
            };
        }
        if let Some(v) = self.m1_resolution {
            cfg.metrics.m1_resolution = v;
        }
        if let Some(v) = self.jobs {
            cfg.output.jobs = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic occupancy log and write it as CSV.
    Generate {
        /// Experiment config (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path (default: <output.dir>/data.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fit one grid cell and save the model as JSON.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Prediction horizon (default: first grid entry).
        #[arg(long)]
        horizon: Option<i64>,
        /// Training columns per day (default: first grid entry).
        #[arg(long)]
        t_columns: Option<usize>,
        /// Model output path (default: <output.dir>/model.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a saved model's predictions as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the full (horizon x columns-per-day) grid and score every
    /// method; exits 2 if some cells failed.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides [output] dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Time solver sweeps across training-column counts.
    Benchmark {
        /// Comma-separated training-column counts.
        #[arg(long, value_delimiter = ',', default_values_t = [600usize, 1200])]
        t1: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        rank: usize,
        #[arg(long, default_value_t = 3)]
        sensors: usize,
        #[arg(long, default_value_t = 10)]
        lag: usize,
        #[arg(long, default_value_t = 60)]
        test_columns: usize,
        /// Timed sweeps per size (median reported).
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Dump a saved model's features, coefficients, predictions, and the
    /// aligned ground truth as CSV matrices.
    DumpFeatures {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            config,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let series = ekmc_core::generate_synthetic(&cfg.data.synthetic)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.join("data.csv"));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            ekmc_core::write_csv(&series, &out)?;
            println!("wrote {} sensors to {}", series.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit {
            config,
            horizon,
            t_columns,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let series = experiment::load_series(&cfg)?;
            let h = horizon.unwrap_or(cfg.window.horizons[0]);
            let t = t_columns.unwrap_or(cfg.window.columns_per_day[0]);
            let (saved, fitted, _) = model::fit_single_cell(&cfg, &series, h, t)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.join("model.json"));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            saved.save(&out)?;
            println!(
                "fit h={h} t={t}: {} rounds, train errors {}, model at {}",
                fitted.rounds.len(),
                fitted.train_error_count,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { model, out_dir } => {
            let saved = model::SavedModel::load(&model)?;
            let (raw, binary) = model::write_predictions(&saved, &out_dir)?;
            println!("wrote {} and {}", raw.display(), binary.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            config,
            out_dir,
            overrides,
        } => {
            let mut cfg = load_config(&config, &overrides)?;
            if let Some(dir) = out_dir {
                cfg.output.dir = dir;
            }
            let outcome = experiment::run_experiment(&cfg)?;
            println!(
                "{} result rows, {} failed cells; results at {}",
                outcome.rows.len(),
                outcome.failures.len(),
                outcome.results_csv.display()
            );
            for failure in &outcome.failures {
                eprintln!(
                    "cell h={} dt={} failed: {}",
                    failure.horizon, failure.dt, failure.message
                );
            }
            if outcome.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::Benchmark {
            t1,
            rank,
            sensors,
            lag,
            test_columns,
            repeats,
            seed,
            out_dir,
        } => {
            let rows = bench::time_sweeps(&t1, sensors, lag, test_columns, rank, repeats, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("bench.csv");
            let mut text = String::from("t1,median_sweep_ms\n");
            for row in &rows {
                println!("t1 = {:>6}: {:.3} ms/sweep", row.train_cols, row.median_sweep_ms);
                text.push_str(&format!("{},{}\n", row.train_cols, row.median_sweep_ms));
            }
            for pair in rows.windows(2) {
                let factor = pair[1].median_sweep_ms / pair[0].median_sweep_ms.max(1e-9);
                println!(
                    "t1 {} -> {}: x{:.2}",
                    pair[0].train_cols, pair[1].train_cols, factor
                );
            }
            std::fs::write(&path, text).context("writing bench.csv")?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpFeatures {
            config,
            model,
            out_dir,
        } => {
            let cfg = load_config(&config, &Overrides::default())?;
            let saved = model::SavedModel::load(&model)?;
            model::dump_features(&cfg, &saved, &out_dir)?;
            println!("wrote feature matrices to {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
