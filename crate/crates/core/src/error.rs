//! Error type shared by every module in the crate.

use ndarray::Array2;
use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or counts that must agree do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A sensor has no observation for a second the window arrangement needs.
    #[error("sensor {sensor} has no data for second {timestamp}")]
    Coverage { sensor: String, timestamp: i64 },

    /// A gap in an event log exceeds the forward-fill limit.
    #[error("sensor {sensor}: gap of {len}s starting at {start} exceeds max_gap {max_gap}")]
    CoverageGap {
        sensor: String,
        start: i64,
        len: i64,
        max_gap: i64,
    },

    /// A CSV row that could not be interpreted.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Values that parse but violate a data invariant (e.g. non-binary occupancy).
    #[error("invalid data: {0}")]
    Data(String),

    /// A configuration value outside its legal range.
    #[error("invalid config: {0}")]
    Config(String),

    /// Non-finite values or a failed factorization inside the solver.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input too large for the brute-force verification path.
    #[error("signal length {len} exceeds oracle limit {max}")]
    OracleSize { len: usize, max: usize },

    /// The first boosting round was already weak, so no round was retained.
    /// Carries the single-round prediction so callers can still fall back on it.
    #[error("degenerate ensemble: first round weak (weighted error {epsilon:.4})")]
    DegenerateEnsemble {
        epsilon: f64,
        fallback: Array2<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
