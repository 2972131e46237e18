//! Evaluation metrics: per-variable MAE and the Skorokhod M1 distance
//! between binary step signals.
//!
//! A length-`t` binary signal is read as a piecewise-constant,
//! right-continuous function on `[0, t-1]` with jumps at integer times. Its
//! completed graph inserts a vertical segment at each jump, producing a
//! connected curve; the M1 distance is the infimum over monotone
//! parameterizations of both completed graphs of the larger of the spatial
//! and temporal sup-differences. That infimum is computed here as a
//! discrete Frechet distance between densified completed graphs under the
//! point metric `max(|space gap|, |time gap|)`; it converges to the true
//! value from above as the sampling resolution grows. A brute-force
//! implementation over small undensified graphs serves as the ground-truth
//! oracle.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Longest signal the brute-force oracle accepts.
pub const ORACLE_MAX_LEN: usize = 12;

/// A binary step signal sampled at 1 Hz.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepSignal {
    values: Vec<u8>,
}

impl StepSignal {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("step signal must be non-empty".into()));
        }
        if values.iter().any(|v| *v > 1) {
            return Err(Error::Data("step signal must be binary".into()));
        }
        Ok(Self { values })
    }

    /// Reads one sensor row of a binary matrix as a signal.
    pub fn from_row(matrix: &Array2<u8>, row: usize) -> Result<Self> {
        Self::new(matrix.row(row).to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }
}

/// A time-monotone polyline tracing a completed graph: `(space, time)`
/// points, starting at `(values[0], 0)` and ending at `(values[t-1], t-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricPath {
    points: Vec<(f64, f64)>,
}

impl ParametricPath {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Densified completed graph of a signal: horizontal runs are sampled every
/// `1/resolution` time units and vertical jump segments every
/// `1/resolution` space units, in traversal order.
pub fn completed_graph(signal: &StepSignal, resolution: usize) -> ParametricPath {
    let resolution = resolution.max(1);
    let step = 1.0 / resolution as f64;
    let v = signal.values();
    let mut points = Vec::with_capacity(1 + (v.len() - 1) * 2 * resolution);
    points.push((f64::from(v[0]), 0.0));
    for i in 1..v.len() {
        let t = i as f64;
        // Horizontal run across [i-1, i] at the previous level.
        let level = f64::from(v[i - 1]);
        for k in 1..=resolution {
            points.push((level, t - 1.0 + k as f64 * step));
        }
        if v[i] != v[i - 1] {
            // Vertical jump segment at time i.
            let dir = if v[i] > v[i - 1] { 1.0 } else { -1.0 };
            for k in 1..=resolution {
                points.push((level + dir * k as f64 * step, t));
            }
        }
    }
    ParametricPath { points }
}

fn point_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Discrete Frechet distance between two point sequences under
/// [`point_distance`], by the standard dynamic program over the pair grid.
fn discrete_frechet(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut curr = vec![0.0f64; m];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            let d = point_distance(pa, pb);
            let reach = match (i, j) {
                (0, 0) => d,
                (0, _) => curr[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                (_, _) => prev[j].min(prev[j - 1]).min(curr[j - 1]).max(d),
            };
            curr[j] = reach;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m - 1]
}

/// Approximate M1 distance between two equal-length binary signals.
///
/// Non-increasing as the resolution is refined (up to float slack) and
/// converges to the true infimum from above.
pub fn m1_distance(a: &StepSignal, b: &StepSignal, resolution: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "signal lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let pa = completed_graph(a, resolution);
    let pb = completed_graph(b, resolution);
    Ok(discrete_frechet(pa.points(), pb.points()))
}

/// Corner vertices of the completed graph, refined so every segment is cut
/// into pieces no longer than `1/per_unit`. Built independently of
/// [`completed_graph`] so the oracle does not share its construction path.
fn refined_corners(signal: &StepSignal, per_unit: usize) -> Vec<(f64, f64)> {
    let v = signal.values();
    let mut corners = vec![(f64::from(v[0]), 0.0)];
    for i in 1..v.len() {
        corners.push((f64::from(v[i - 1]), i as f64));
        if v[i] != v[i - 1] {
            corners.push((f64::from(v[i]), i as f64));
        }
    }
    let mut refined = vec![corners[0]];
    for pair in corners.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        let seg_len = point_distance(from, to);
        let pieces = ((seg_len * per_unit as f64).ceil() as usize).max(1);
        for k in 1..=pieces {
            let f = k as f64 / pieces as f64;
            refined.push((from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1)));
        }
    }
    refined
}

/// Ground-truth M1 for short signals: exhaustive minimization over all
/// monotone couplings of the refined completed-graph vertices, written as a
/// memoized recursion independent of the iterative path in [`m1_distance`].
pub fn m1_oracle(a: &StepSignal, b: &StepSignal) -> Result<f64> {
    for s in [a, b] {
        if s.len() > ORACLE_MAX_LEN {
            return Err(Error::OracleSize {
                len: s.len(),
                max: ORACLE_MAX_LEN,
            });
        }
    }
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "signal lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let pa = refined_corners(a, 100);
    let pb = refined_corners(b, 100);

    struct Search<'s> {
        memo: Vec<Vec<f64>>,
        a: &'s [(f64, f64)],
        b: &'s [(f64, f64)],
    }
    impl Search<'_> {
        fn best(&mut self, i: usize, j: usize) -> f64 {
            if !self.memo[i][j].is_nan() {
                return self.memo[i][j];
            }
            let d = point_distance(self.a[i], self.b[j]);
            let value = match (i, j) {
                (0, 0) => d,
                (0, _) => self.best(0, j - 1).max(d),
                (_, 0) => self.best(i - 1, 0).max(d),
                (_, _) => {
                    let via = self
                        .best(i - 1, j)
                        .min(self.best(i, j - 1))
                        .min(self.best(i - 1, j - 1));
                    via.max(d)
                }
            };
            self.memo[i][j] = value;
            value
        }
    }
    let mut search = Search {
        memo: vec![vec![f64::NAN; pb.len()]; pa.len()],
        a: &pa,
        b: &pb,
    };
    Ok(search.best(pa.len() - 1, pb.len() - 1))
}

/// Per-variable mean absolute error between equal-shape binary matrices,
/// one value per row. Accuracy is reported as `1 - MAE`.
pub fn mae(truth: &Array2<u8>, pred: &Array2<u8>) -> Result<Vec<f64>> {
    if truth.dim() != pred.dim() {
        return Err(Error::Dimension(format!(
            "truth is {:?}, prediction {:?}",
            truth.dim(),
            pred.dim()
        )));
    }
    let t = truth.ncols() as f64;
    Ok((0..truth.nrows())
        .map(|i| {
            truth
                .row(i)
                .iter()
                .zip(pred.row(i))
                .map(|(a, b)| f64::from(a.abs_diff(*b)))
                .sum::<f64>()
                / t
        })
        .collect())
}
