//! Experiment configuration: a single TOML file with CLI flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ekmc_core::{
    EnsembleConfig, JointProblem, KernelSpec, SolverConfig, SyntheticSpec, Threshold,
};

/// Where the occupancy streams come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// "synthetic" or "csv".
    pub source: String,
    /// Log path when `source = "csv"`.
    pub path: Option<PathBuf>,
    pub max_gap: i64,
    pub timezone_offset: i32,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: "synthetic".into(),
            path: None,
            max_gap: 5,
            timezone_offset: 0,
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Grid of window arrangements to evaluate. Horizons and columns-per-day
/// form the experiment grid; the remaining fields are shared.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowGridConfig {
    pub horizons: Vec<i64>,
    pub columns_per_day: Vec<usize>,
    pub days_per_week: usize,
    pub weeks: usize,
    pub lag: usize,
    pub test_columns: usize,
    /// Anchor second; defaults to the latest second whose truth is covered
    /// for the largest horizon.
    pub anchor: Option<i64>,
}

impl Default for WindowGridConfig {
    fn default() -> Self {
        Self {
            horizons: vec![1, 10, 60, 120],
            columns_per_day: vec![10, 60, 120, 300],
            days_per_week: 5,
            weeks: 4,
            lag: 10,
            test_columns: 60,
            anchor: None,
        }
    }
}

/// Kernel selection with optional parameters; omitted parameters fall back
/// to scale-aware defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub kind: String,
    pub gamma: Option<f64>,
    pub degree: Option<u32>,
    pub coef0: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: "rbf".into(),
            gamma: None,
            degree: None,
            coef0: None,
        }
    }
}

impl KernelConfig {
    pub fn to_spec(&self, input_rows: usize) -> Result<KernelSpec> {
        let spec = match self.kind.as_str() {
            "linear" => KernelSpec::Linear,
            "rbf" => match self.gamma {
                Some(gamma) => KernelSpec::Rbf { gamma },
                None => KernelSpec::default_rbf(input_rows),
            },
            "polynomial" => KernelSpec::Polynomial {
                degree: self.degree.unwrap_or(2),
                coef0: self.coef0.unwrap_or(1.0),
            },
            other => bail!("unknown kernel kind {other:?} (linear|rbf|polynomial)"),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Ensemble section; the threshold is given as `fixed:<value>` or
/// `per-column` (resolved against the training block at fit time).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSection {
    pub max_rounds: usize,
    pub eps_min: f64,
    pub threshold: String,
    pub stop_on_weak: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            eps_min: 1e-6,
            threshold: "fixed:0.5".into(),
            stop_on_weak: true,
        }
    }
}

impl EnsembleSection {
    /// Builds the runtime config, deriving per-column thresholds from the
    /// problem's training block when requested.
    pub fn resolve(&self, problem: &JointProblem) -> Result<EnsembleConfig> {
        let threshold = parse_threshold(&self.threshold, Some(problem))?;
        let cfg = EnsembleConfig {
            max_rounds: self.max_rounds,
            eps_min: self.eps_min,
            threshold,
            stop_on_weak: self.stop_on_weak,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `fixed:<value>`, a bare number, or `per-column`.
pub fn parse_threshold(text: &str, problem: Option<&JointProblem>) -> Result<Threshold> {
    let text = text.trim();
    if text == "per-column" {
        let problem =
            problem.context("per-column thresholds need a fitted problem to derive rates")?;
        return Ok(ekmc_core::positive_rate_thresholds(problem));
    }
    let value = text
        .strip_prefix("fixed:")
        .unwrap_or(text)
        .parse::<f64>()
        .with_context(|| format!("cannot parse threshold {text:?}"))?;
    Ok(Threshold::Fixed(value))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Any of "mae", "m1".
    pub kinds: Vec<String>,
    pub m1_resolution: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            kinds: vec!["mae".into(), "m1".into()],
            m1_resolution: 20,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            bail!("metrics.kinds must not be empty");
        }
        for k in &self.kinds {
            if k != "mae" && k != "m1" {
                bail!("unknown metric {k:?} (mae|m1)");
            }
        }
        if self.m1_resolution == 0 {
            bail!("m1_resolution must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub jobs: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub window: WindowGridConfig,
    pub kernel: KernelConfig,
    pub solver: SolverConfig,
    pub ensemble: EnsembleSection,
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.data.source.as_str() {
            "synthetic" => self.data.synthetic.validate()?,
            "csv" => {
                if self.data.path.is_none() {
                    bail!("data.source = \"csv\" needs data.path");
                }
            }
            other => bail!("unknown data source {other:?} (synthetic|csv)"),
        }
        if self.window.horizons.is_empty() || self.window.columns_per_day.is_empty() {
            bail!("window grids must not be empty");
        }
        self.solver.validate()?;
        self.metrics.validate()?;
        if self.ensemble.threshold != "per-column" {
            parse_threshold(&self.ensemble.threshold, None)?;
        }
        Ok(())
    }

    /// Stable hash of the configuration, for the run manifest.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&canonical);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
