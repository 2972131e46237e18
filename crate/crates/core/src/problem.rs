//! Arrangement of raw multivariate binary series into the structured masked
//! joint matrix the solver completes.
//!
//! For an anchor second `a`, the builder collects input/output column pairs
//! from the `T` seconds immediately preceding the anchor's time-of-day on
//! each of `D = d·w` days (the current day and its same-weekday-offset
//! predecessors over the recent weeks), plus the `T_te` most recent input
//! columns ending at the anchor whose outputs are the unknowns to predict.
//! An input column at second `t` stacks the lag window `x(t-L+1) .. x(t)`;
//! its output is `x(t+H)`.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{OccupancySeries, SECONDS_PER_DAY};
use crate::error::{Error, Result};

/// Dimensional configuration of the window arrangement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Number of sensors (rows of the output block).
    pub sensors: usize,
    /// Time lag: seconds of recent data stacked into each input column.
    pub lag: usize,
    /// Prediction horizon in seconds ahead.
    pub horizon: i64,
    /// Training columns taken per historical day.
    pub columns_per_day: usize,
    /// Days used per week.
    pub days_per_week: usize,
    /// Weeks used.
    pub weeks: usize,
    /// Number of test columns.
    pub test_columns: usize,
    /// Seconds east of UTC of the sensors' local clock. Day alignment works
    /// on wall-clock time-of-day under this fixed offset.
    #[serde(default)]
    pub timezone_offset: i32,
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sensors == 0
            || self.lag == 0
            || self.horizon < 1
            || self.columns_per_day == 0
            || self.days_per_week == 0
            || self.weeks == 0
            || self.test_columns == 0
        {
            return Err(Error::Config(
                "all window dimensions must be >= 1".into(),
            ));
        }
        if self.days_per_week > 7 {
            return Err(Error::Config("days_per_week must be <= 7".into()));
        }
        Ok(())
    }

    /// Total days used.
    pub fn days_used(&self) -> usize {
        self.days_per_week * self.weeks
    }

    /// Total training columns.
    pub fn train_columns(&self) -> usize {
        self.days_used() * self.columns_per_day
    }

    /// Rows of an input column (`sensors * lag`).
    pub fn input_rows(&self) -> usize {
        self.sensors * self.lag
    }

    /// Day offsets (whole days back from the anchor), oldest first. The
    /// current day is offset 0; each week contributes its most recent
    /// `days_per_week` days.
    pub fn day_offsets(&self) -> Vec<i64> {
        let mut offsets = Vec::with_capacity(self.days_used());
        for week in (0..self.weeks).rev() {
            for day in (0..self.days_per_week).rev() {
                offsets.push((7 * week + day) as i64);
            }
        }
        offsets
    }
}

/// The structured masked joint matrix: known training outputs and all
/// inputs, with the test-output block unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct JointProblem {
    train_outputs: Array2<f64>, // sensors x t1
    train_inputs: Array2<f64>,  // (sensors*lag) x t1
    test_inputs: Array2<f64>,   // (sensors*lag) x t2
    config: WindowConfig,
    anchor: i64,
    sensor_ids: Vec<String>,
}

impl JointProblem {
    /// Assembles a problem directly from matrices, checking shape consistency
    /// and finiteness. `build_windows` is the validated path from raw series;
    /// this constructor exists for synthetic solver instances and does not
    /// enforce binary entries.
    pub fn from_parts(
        train_outputs: Array2<f64>,
        train_inputs: Array2<f64>,
        test_inputs: Array2<f64>,
        config: WindowConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (n, t1, nl, t2) = (
            config.sensors,
            config.train_columns(),
            config.input_rows(),
            config.test_columns,
        );
        if train_outputs.dim() != (n, t1) {
            return Err(Error::Dimension(format!(
                "train outputs are {:?}, expected ({n}, {t1})",
                train_outputs.dim()
            )));
        }
        if train_inputs.dim() != (nl, t1) {
            return Err(Error::Dimension(format!(
                "train inputs are {:?}, expected ({nl}, {t1})",
                train_inputs.dim()
            )));
        }
        if test_inputs.dim() != (nl, t2) {
            return Err(Error::Dimension(format!(
                "test inputs are {:?}, expected ({nl}, {t2})",
                test_inputs.dim()
            )));
        }
        for m in [&train_outputs, &train_inputs, &test_inputs] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite entry in joint problem".into()));
            }
        }
        let sensor_ids = (1..=n).map(|i| format!("s{i}")).collect();
        Ok(Self {
            train_outputs,
            train_inputs,
            test_inputs,
            config,
            anchor: 0,
            sensor_ids,
        })
    }

    pub fn train_outputs(&self) -> &Array2<f64> {
        &self.train_outputs
    }

    pub fn train_inputs(&self) -> &Array2<f64> {
        &self.train_inputs
    }

    pub fn test_inputs(&self) -> &Array2<f64> {
        &self.test_inputs
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    /// Anchor second the problem was built around (0 for `from_parts`).
    pub fn anchor(&self) -> i64 {
        self.anchor
    }

    pub fn sensor_ids(&self) -> &[String] {
        &self.sensor_ids
    }

    /// Sensor count.
    pub fn outputs(&self) -> usize {
        self.config.sensors
    }

    /// Training column count.
    pub fn train_cols(&self) -> usize {
        self.train_outputs.ncols()
    }

    /// Test column count.
    pub fn test_cols(&self) -> usize {
        self.test_inputs.ncols()
    }

    /// True for every entry of the flattened joint matrix except the
    /// test-output block in the top-right corner.
    pub fn is_known(&self, row: usize, col: usize) -> bool {
        !(row < self.outputs() && col >= self.train_cols())
    }

    /// Dense boolean mask matching [`flatten_joint`].
    pub fn mask(&self) -> Array2<bool> {
        let rows = self.outputs() + self.config.input_rows();
        let cols = self.train_cols() + self.test_cols();
        Array2::from_shape_fn((rows, cols), |(i, j)| self.is_known(i, j))
    }

    /// Absolute second of test column `j`'s most recent input sample.
    pub fn test_column_time(&self, j: usize) -> i64 {
        self.anchor - self.test_cols() as i64 + 1 + j as i64
    }
}

/// Builds the masked joint problem around `anchor` from per-sensor series.
///
/// Training columns are ordered oldest-day-first and oldest-time-first
/// within a day; test columns are the most recent inputs ending at the
/// anchor. Fails with a coverage error naming the first missing
/// (sensor, second) if any required sample is absent.
pub fn build_windows(
    series: &[OccupancySeries],
    anchor: i64,
    config: &WindowConfig,
) -> Result<JointProblem> {
    config.validate()?;
    if series.len() != config.sensors {
        return Err(Error::Dimension(format!(
            "{} series provided, config expects {}",
            series.len(),
            config.sensors
        )));
    }
    let n = config.sensors;
    let lag = config.lag as i64;
    let t1 = config.train_columns();
    let t2 = config.test_columns;
    let nl = config.input_rows();

    let fetch = |sensor: usize, t: i64| -> Result<f64> {
        series[sensor].value_at(t).map(f64::from).ok_or_else(|| {
            Error::Coverage {
                sensor: series[sensor].sensor_id().to_string(),
                timestamp: t,
            }
        })
    };
    // Input column at second t: lag window oldest step first, sensors within
    // a step. Row (k*n + i) holds sensor i at second t - lag + 1 + k.
    let fill_input_column = |matrix: &mut Array2<f64>, col: usize, t: i64| -> Result<()> {
        for k in 0..config.lag {
            let step_t = t - lag + 1 + k as i64;
            for i in 0..n {
                matrix[(k * n + i, col)] = fetch(i, step_t)?;
            }
        }
        Ok(())
    };

    let mut train_outputs = Array2::zeros((n, t1));
    let mut train_inputs = Array2::zeros((nl, t1));
    let mut test_inputs = Array2::zeros((nl, t2));

    let mut col = 0;
    for offset in config.day_offsets() {
        let day_anchor = anchor - offset * SECONDS_PER_DAY;
        for step in 0..config.columns_per_day {
            let t = day_anchor - config.columns_per_day as i64 + step as i64;
            fill_input_column(&mut train_inputs, col, t)?;
            for i in 0..n {
                train_outputs[(i, col)] = fetch(i, t + config.horizon)?;
            }
            col += 1;
        }
    }
    debug_assert_eq!(col, t1);
    for j in 0..t2 {
        let t = anchor - t2 as i64 + 1 + j as i64;
        fill_input_column(&mut test_inputs, j, t)?;
    }

    let sensor_ids = series.iter().map(|s| s.sensor_id().to_string()).collect();
    Ok(JointProblem {
        train_outputs,
        train_inputs,
        test_inputs,
        config: config.clone(),
        anchor,
        sensor_ids,
    })
}

/// Flattens the problem into the dense `(n + nL) x (t1 + t2)` joint matrix
/// with the unknown test-output block zero-filled, plus the known-entry
/// mask. Used by the explicit-feature oracle and for debugging dumps; the
/// fill value never enters the objective because of the mask.
pub fn flatten_joint(problem: &JointProblem) -> (Array2<f64>, Array2<bool>) {
    let n = problem.outputs();
    let nl = problem.config.input_rows();
    let t1 = problem.train_cols();
    let t2 = problem.test_cols();
    let mut dense = Array2::zeros((n + nl, t1 + t2));
    dense
        .slice_mut(s![..n, ..t1])
        .assign(problem.train_outputs());
    dense
        .slice_mut(s![n.., ..t1])
        .assign(problem.train_inputs());
    dense.slice_mut(s![n.., t1..]).assign(problem.test_inputs());
    (dense, problem.mask())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn single_series(values: Vec<u8>) -> OccupancySeries {
        OccupancySeries::new("a", 0, values).unwrap()
    }

    fn minimal_config() -> WindowConfig {
        WindowConfig {
            sensors: 1,
            lag: 1,
            horizon: 1,
            columns_per_day: 1,
            days_per_week: 1,
            weeks: 1,
            test_columns: 1,
            timezone_offset: 0,
        }
    }

    #[test]
    fn smallest_legal_arrangement() {
        // Four seconds 0,1,0,1; anchor at index 2.
        let series = vec![single_series(vec![0, 1, 0, 1])];
        let p = build_windows(&series, 2, &minimal_config()).unwrap();
        assert_eq!(p.train_inputs()[(0, 0)], 1.0); // x(1)
        assert_eq!(p.train_outputs()[(0, 0)], 0.0); // x(2)
        assert_eq!(p.test_inputs()[(0, 0)], 0.0); // x(2)
        assert_eq!(p.train_outputs().dim(), (1, 1));
        assert_eq!(p.train_inputs().dim(), (1, 1));
        assert_eq!(p.test_inputs().dim(), (1, 1));
    }

    #[test]
    fn dimensions_follow_the_grid() {
        let config = WindowConfig {
            sensors: 2,
            lag: 3,
            horizon: 1,
            columns_per_day: 10,
            days_per_week: 5,
            weeks: 4,
            test_columns: 60,
            timezone_offset: 0,
        };
        let spec = SyntheticSpec {
            n_sensors: 2,
            n_days: 28,
            flip_noise: 0.0,
            ..SyntheticSpec::default()
        };
        let series = generate_synthetic(&spec).unwrap();
        let anchor = series[0].end() - 2;
        let p = build_windows(&series, anchor, &config).unwrap();
        assert_eq!(p.train_inputs().dim(), (6, 200));
        assert_eq!(p.train_outputs().dim(), (2, 200));
        assert_eq!(p.test_inputs().dim(), (6, 60));
        assert_eq!(config.train_columns(), config.days_used() * config.columns_per_day);
    }

    #[test]
    fn columns_match_direct_indexing() {
        let config = WindowConfig {
            sensors: 2,
            lag: 3,
            horizon: 5,
            columns_per_day: 4,
            days_per_week: 2,
            weeks: 2,
            test_columns: 3,
            timezone_offset: 0,
        };
        let spec = SyntheticSpec {
            n_sensors: 2,
            n_days: 12,
            flip_noise: 0.3,
            seed: 17,
            ..SyntheticSpec::default()
        };
        let series = generate_synthetic(&spec).unwrap();
        let anchor = series[0].end() - config.horizon;
        let p = build_windows(&series, anchor, &config).unwrap();

        let mut col = 0;
        for offset in config.day_offsets() {
            let day_anchor = anchor - offset * SECONDS_PER_DAY;
            for step in 0..config.columns_per_day {
                let t = day_anchor - config.columns_per_day as i64 + step as i64;
                for i in 0..config.sensors {
                    let expected = f64::from(series[i].value_at(t + config.horizon).unwrap());
                    assert_eq!(p.train_outputs()[(i, col)], expected);
                    for k in 0..config.lag {
                        let sample =
                            f64::from(series[i].value_at(t - config.lag as i64 + 1 + k as i64).unwrap());
                        assert_eq!(p.train_inputs()[(k * config.sensors + i, col)], sample);
                    }
                }
                col += 1;
            }
        }
        assert_eq!(col, p.train_cols());
        for j in 0..config.test_columns {
            let t = p.test_column_time(j);
            for i in 0..config.sensors {
                for k in 0..config.lag {
                    let sample =
                        f64::from(series[i].value_at(t - config.lag as i64 + 1 + k as i64).unwrap());
                    assert_eq!(p.test_inputs()[(k * config.sensors + i, j)], sample);
                }
            }
        }
    }

    #[test]
    fn missing_second_is_named() {
        // Three sensors over three days; truncate one sensor's series so the
        // earliest second the oldest day needs is absent.
        let config = WindowConfig {
            sensors: 3,
            lag: 2,
            horizon: 1,
            columns_per_day: 3,
            days_per_week: 3,
            weeks: 1,
            test_columns: 2,
            timezone_offset: 0,
        };
        let spec = SyntheticSpec {
            n_sensors: 3,
            n_days: 3,
            flip_noise: 0.0,
            ..SyntheticSpec::default()
        };
        let mut series = generate_synthetic(&spec).unwrap();
        let anchor = series[0].end();
        // Earliest required second: oldest day offset 2, first column's
        // oldest lag sample.
        let earliest = anchor - 2 * SECONDS_PER_DAY - config.columns_per_day as i64
            - config.lag as i64 + 1;
        let victim = &series[1];
        let cut = (earliest + 1 - victim.start()) as usize;
        series[1] = OccupancySeries::new(
            victim.sensor_id(),
            earliest + 1,
            victim.values()[cut..].to_vec(),
        )
        .unwrap();
        match build_windows(&series, anchor, &config).unwrap_err() {
            Error::Coverage { sensor, timestamp } => {
                assert_eq!(sensor, "s2");
                assert_eq!(timestamp, earliest);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sensor_count_mismatch_is_a_dimension_error() {
        let series = vec![single_series(vec![0, 1, 0, 1])];
        let mut config = minimal_config();
        config.sensors = 2;
        assert!(matches!(
            build_windows(&series, 2, &config).unwrap_err(),
            Error::Dimension(_)
        ));
    }

    #[test]
    fn flatten_matches_layout_and_mask() {
        let series = vec![single_series(vec![0, 1, 0, 1])];
        let p = build_windows(&series, 2, &minimal_config()).unwrap();
        let (dense, mask) = flatten_joint(&p);
        assert_eq!(dense.dim(), (2, 2));
        assert_eq!(dense[(0, 0)], 0.0); // y_tr
        assert_eq!(dense[(0, 1)], 0.0); // zero-filled unknown
        assert_eq!(dense[(1, 0)], 1.0); // x_tr
        assert_eq!(dense[(1, 1)], 0.0); // x_te
        let unknown: usize = mask.iter().filter(|known| !**known).count();
        assert_eq!(unknown, p.outputs() * p.test_cols());
        assert!(!mask[(0, 1)]);
        assert!(mask[(0, 0)] && mask[(1, 0)] && mask[(1, 1)]);
    }

    #[test]
    fn flatten_round_trips_blocks() {
        let config = WindowConfig {
            sensors: 2,
            lag: 2,
            horizon: 2,
            columns_per_day: 3,
            days_per_week: 1,
            weeks: 2,
            test_columns: 2,
            timezone_offset: 0,
        };
        let spec = SyntheticSpec {
            n_sensors: 2,
            n_days: 10,
            ..SyntheticSpec::default()
        };
        let series = generate_synthetic(&spec).unwrap();
        let p = build_windows(&series, series[0].end() - 2, &config).unwrap();
        let (dense, _) = flatten_joint(&p);
        let n = p.outputs();
        let t1 = p.train_cols();
        assert_eq!(dense.slice(s![..n, ..t1]), p.train_outputs());
        assert_eq!(dense.slice(s![n.., ..t1]), p.train_inputs());
        assert_eq!(dense.slice(s![n.., t1..]), p.test_inputs());
    }

    #[test]
    fn build_is_deterministic() {
        let spec = SyntheticSpec {
            n_sensors: 2,
            n_days: 2,
            ..SyntheticSpec::default()
        };
        let series = generate_synthetic(&spec).unwrap();
        let config = WindowConfig {
            sensors: 2,
            lag: 2,
            horizon: 3,
            columns_per_day: 5,
            days_per_week: 1,
            weeks: 1,
            test_columns: 4,
            timezone_offset: 0,
        };
        let anchor = series[0].end() - 3;
        let a = build_windows(&series, anchor, &config).unwrap();
        let b = build_windows(&series, anchor, &config).unwrap();
        assert_eq!(a, b);
    }
}
