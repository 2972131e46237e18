//! Ingestion of 1 Hz event logs, gap repair, and a synthetic generator for
//! signal-cycle occupancy streams.
//!
//! The on-disk format is a CSV with header `timestamp,sensor_id,occupancy`:
//! integer UTC second, opaque sensor id, and a 0/1 state. [`ingest_csv`]
//! turns such a log into per-sensor contiguous [`OccupancySeries`],
//! forward-filling gaps up to a configurable limit. [`generate_synthetic`]
//! produces streams with a periodic green/red cycle structure plus optional
//! bit-flip noise, for desk-scale experiments where no real logs exist.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per day; the generator and the window builder both align on this.
pub const SECONDS_PER_DAY: i64 = 86_400;

/// A per-sensor 1 Hz binary signal with an absolute start time.
///
/// Values are contiguous: `values[k]` is the occupancy at second `start + k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancySeries {
    sensor_id: String,
    start: i64,
    values: Vec<u8>,
}

impl OccupancySeries {
    /// Builds a series, validating that it is non-empty and strictly binary.
    pub fn new(sensor_id: impl Into<String>, start: i64, values: Vec<u8>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("occupancy series must be non-empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| *v > 1) {
            return Err(Error::Data(format!(
                "occupancy at second {} is {}, expected 0 or 1",
                start + pos as i64,
                values[pos]
            )));
        }
        Ok(Self {
            sensor_id: sensor_id.into(),
            start,
            values,
        })
    }

    pub fn sensor_id(&self) -> &str {
        &self.sensor_id
    }

    /// First covered second.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last covered second (inclusive).
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
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

    /// Occupancy at an absolute second, or `None` outside the covered range.
    pub fn value_at(&self, timestamp: i64) -> Option<u8> {
        if timestamp < self.start || timestamp > self.end() {
            return None;
        }
        Some(self.values[(timestamp - self.start) as usize])
    }
}

/// One parsed log row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLogRow {
    pub timestamp: i64,
    pub sensor_id: String,
    pub occupancy: u8,
}

/// A raw event log: parsed rows plus source metadata.
///
/// Rows are sorted by `(sensor_id, timestamp)` after ingestion.
#[derive(Clone, Debug)]
pub struct EventLog {
    pub rows: Vec<EventLogRow>,
    pub source: Option<PathBuf>,
    pub timezone_offset: i32,
}

impl EventLog {
    /// Parses a `timestamp,sensor_id,occupancy` CSV file.
    pub fn from_csv(path: &Path, timezone_offset: i32) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 3 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let timestamp: i64 = record[0].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid timestamp {:?}", &record[0]),
            })?;
            let sensor_id = record[1].to_string();
            if sensor_id.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty sensor_id".into(),
                });
            }
            let occupancy: i64 = record[2].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid occupancy {:?}", &record[2]),
            })?;
            if occupancy != 0 && occupancy != 1 {
                return Err(Error::Data(format!(
                    "line {line}: occupancy {occupancy} is not binary"
                )));
            }
            rows.push(EventLogRow {
                timestamp,
                sensor_id,
                occupancy: occupancy as u8,
            });
        }
        rows.sort_by(|a, b| (&a.sensor_id, a.timestamp).cmp(&(&b.sensor_id, b.timestamp)));
        Ok(Self {
            rows,
            source: Some(path.to_path_buf()),
            timezone_offset,
        })
    }

    /// Converts the log into per-sensor contiguous series.
    ///
    /// Missing seconds inside a sensor's span are forward-filled when the gap
    /// is at most `max_gap` seconds; longer gaps abort with a coverage error
    /// naming the span. Duplicate rows with conflicting values are rejected.
    pub fn into_series(self, max_gap: i64) -> Result<Vec<OccupancySeries>> {
        let mut per_sensor: BTreeMap<String, Vec<(i64, u8)>> = BTreeMap::new();
        for row in self.rows {
            per_sensor
                .entry(row.sensor_id)
                .or_default()
                .push((row.timestamp, row.occupancy));
        }
        let mut out = Vec::with_capacity(per_sensor.len());
        for (sensor, samples) in per_sensor {
            let mut values = Vec::with_capacity(samples.len());
            let start = samples[0].0;
            let mut last_t = start;
            let mut last_v = samples[0].1;
            values.push(last_v);
            for &(t, v) in &samples[1..] {
                if t == last_t {
                    if v != last_v {
                        return Err(Error::Data(format!(
                            "sensor {sensor}: conflicting values at second {t}"
                        )));
                    }
                    continue;
                }
                let gap = t - last_t - 1;
                if gap > 0 {
                    if gap > max_gap {
                        return Err(Error::CoverageGap {
                            sensor,
                            start: last_t + 1,
                            len: gap,
                            max_gap,
                        });
                    }
                    log::debug!(
                        "sensor {sensor}: forward-filled {gap}s gap at {}..{}",
                        last_t + 1,
                        t - 1
                    );
                    for _ in 0..gap {
                        values.push(last_v);
                    }
                }
                values.push(v);
                last_t = t;
                last_v = v;
            }
            out.push(OccupancySeries::new(sensor, start, values)?);
        }
        Ok(out)
    }
}

/// Ingestion knobs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Seconds east of UTC of the sensors' local clock; carried through as
    /// metadata for day alignment downstream.
    pub timezone_offset: i32,
    /// Largest gap (seconds) repaired by forward fill.
    pub max_gap: i64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            timezone_offset: 0,
            max_gap: 5,
        }
    }
}

/// Reads a CSV event log and returns repaired per-sensor series, sorted by
/// sensor id.
pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<Vec<OccupancySeries>> {
    EventLog::from_csv(path, opts.timezone_offset)?.into_series(opts.max_gap)
}

/// Writes series back out in the ingestion schema (`timestamp,sensor_id,occupancy`,
/// sorted by sensor id then timestamp). Gap-free logs round-trip bit-exactly.
pub fn write_csv(series: &[OccupancySeries], path: &Path) -> Result<()> {
    let mut sorted: Vec<&OccupancySeries> = series.iter().collect();
    sorted.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "timestamp,sensor_id,occupancy")?;
    for s in sorted {
        for (k, v) in s.values.iter().enumerate() {
            writeln!(w, "{},{},{}", s.start + k as i64, s.sensor_id, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the synthetic signal-cycle generator.
///
/// Each sensor repeats a fixed occupancy pattern of one cycle (drawn once
/// from green/red Bernoulli rates), phase-shifted per sensor, with optional
/// per-second bit-flip noise on top. At `flip_noise = 0` the stream is
/// exactly periodic with period `cycle_length`; pick a cycle that divides
/// 86400 if columns on different days must see identical phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_sensors: usize,
    pub n_days: usize,
    /// Cycle period in seconds (>= 2). Street-signal cycles are on the order
    /// of two minutes, hence the default of 120.
    pub cycle_length: i64,
    /// Fraction of the cycle in the green phase; one entry broadcast to all
    /// sensors, or one entry per sensor.
    pub green_ratio: Vec<f64>,
    /// Per-second occupancy probability during the green phase.
    pub occupancy_prob_green: f64,
    /// Per-second occupancy probability during the red phase.
    pub occupancy_prob_red: f64,
    /// Phase offset between consecutive sensors, in seconds.
    pub correlation: i64,
    /// Probability of flipping each emitted bit.
    pub flip_noise: f64,
    pub seed: u64,
    /// UTC second of the first sample.
    #[serde(default)]
    pub start: i64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_sensors: 3,
            n_days: 35,
            cycle_length: 120,
            green_ratio: vec![0.5],
            occupancy_prob_green: 0.8,
            occupancy_prob_red: 0.05,
            correlation: 7,
            flip_noise: 0.02,
            seed: 42,
            start: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sensors == 0 || self.n_days == 0 {
            return Err(Error::Config("n_sensors and n_days must be >= 1".into()));
        }
        if self.cycle_length < 2 {
            return Err(Error::Config("cycle_length must be >= 2".into()));
        }
        if self.green_ratio.is_empty()
            || (self.green_ratio.len() != 1 && self.green_ratio.len() != self.n_sensors)
        {
            return Err(Error::Config(
                "green_ratio must have one entry or one per sensor".into(),
            ));
        }
        for p in self
            .green_ratio
            .iter()
            .chain([&self.occupancy_prob_green, &self.occupancy_prob_red])
            .chain([&self.flip_noise])
        {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn green_ratio_for(&self, sensor: usize) -> f64 {
        if self.green_ratio.len() == 1 {
            self.green_ratio[0]
        } else {
            self.green_ratio[sensor]
        }
    }
}

/// Generates per-sensor occupancy streams from a [`SyntheticSpec`].
///
/// Deterministic given the seed: each sensor uses its own RNG stream, so
/// adding sensors does not perturb existing ones.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<OccupancySeries>> {
    spec.validate()?;
    let total_seconds = spec.n_days as i64 * SECONDS_PER_DAY;
    let cycle = spec.cycle_length;
    let width = (spec.n_sensors as f64).log10().floor() as usize + 1;
    let mut out = Vec::with_capacity(spec.n_sensors);
    for sensor in 0..spec.n_sensors {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(sensor as u64 + 1);
        let green_len = ((spec.green_ratio_for(sensor) * cycle as f64).round() as i64).clamp(0, cycle);
        // One cycle's worth of pattern, repeated for the whole horizon.
        let base: Vec<u8> = (0..cycle)
            .map(|pos| {
                let p = if pos < green_len {
                    spec.occupancy_prob_green
                } else {
                    spec.occupancy_prob_red
                };
                u8::from(rng.random::<f64>() < p)
            })
            .collect();
        let offset = sensor as i64 * spec.correlation;
        let mut values = Vec::with_capacity(total_seconds as usize);
        for t in 0..total_seconds {
            let pos = (t + offset).rem_euclid(cycle) as usize;
            let mut v = base[pos];
            if spec.flip_noise > 0.0 && rng.random::<f64>() < spec.flip_noise {
                v ^= 1;
            }
            values.push(v);
        }
        let id = format!("s{sensor:0width$}", sensor = sensor + 1, width = width);
        out.push(OccupancySeries::new(id, spec.start, values)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_lines(path: &Path, lines: &[&str]) {
        let mut f = File::create(path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
    }

    #[test]
    fn series_rejects_non_binary() {
        let err = OccupancySeries::new("a", 0, vec![0, 2, 1]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn ingest_contiguous_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_lines(
            &path,
            &[
                "timestamp,sensor_id,occupancy",
                "100,a,0",
                "101,a,1",
                "102,a,1",
            ],
        );
        let series = ingest_csv(&path, &IngestOptions::default()).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].start(), 100);
        assert_eq!(series[0].values(), &[0, 1, 1]);
    }

    #[test]
    fn ingest_forward_fills_single_second_gap() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_lines(
            &path,
            &["timestamp,sensor_id,occupancy", "10,a,0", "12,a,1"],
        );
        let series = ingest_csv(&path, &IngestOptions::default()).unwrap();
        assert_eq!(series[0].values(), &[0, 0, 1]);
        assert_eq!(series[0].value_at(11), Some(0));
    }

    #[test]
    fn ingest_rejects_gap_beyond_max() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_lines(
            &path,
            &["timestamp,sensor_id,occupancy", "0,a,0", "11,a,1"],
        );
        let err = ingest_csv(&path, &IngestOptions::default()).unwrap_err();
        match err {
            Error::CoverageGap {
                sensor,
                start,
                len,
                max_gap,
            } => {
                assert_eq!(sensor, "a");
                assert_eq!(start, 1);
                assert_eq!(len, 10);
                assert_eq!(max_gap, 5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_parse_errors_with_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_lines(
            &path,
            &["timestamp,sensor_id,occupancy", "0,a,0", "oops,a,1"],
        );
        let err = ingest_csv(&path, &IngestOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_non_binary_occupancy() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_lines(&path, &["timestamp,sensor_id,occupancy", "0,a,3"]);
        assert!(matches!(
            ingest_csv(&path, &IngestOptions::default()).unwrap_err(),
            Error::Data(_)
        ));
    }

    #[test]
    fn degenerate_spec_is_a_square_wave() {
        let spec = SyntheticSpec {
            n_sensors: 1,
            n_days: 1,
            cycle_length: 10,
            green_ratio: vec![0.3],
            occupancy_prob_green: 1.0,
            occupancy_prob_red: 0.0,
            correlation: 0,
            flip_noise: 0.0,
            seed: 1,
            start: 0,
        };
        let series = generate_synthetic(&spec).unwrap();
        let v = series[0].values();
        for t in 0..v.len() {
            let expected = u8::from(t % 10 < 3);
            assert_eq!(v[t], expected, "second {t}");
        }
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let spec = SyntheticSpec {
            n_days: 1,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_free_streams_are_cycle_periodic() {
        let spec = SyntheticSpec {
            n_sensors: 2,
            n_days: 1,
            cycle_length: 97, // deliberately not dividing 86400
            green_ratio: vec![0.4],
            occupancy_prob_green: 0.7,
            occupancy_prob_red: 0.1,
            correlation: 13,
            flip_noise: 0.0,
            seed: 9,
            start: 0,
        };
        for s in generate_synthetic(&spec).unwrap() {
            let v = s.values();
            for t in 0..v.len() - 97 {
                assert_eq!(v[t], v[t + 97]);
            }
        }
    }

    #[test]
    fn imbalanced_spec_has_exact_ones_share_per_cycle() {
        let spec = SyntheticSpec {
            n_sensors: 1,
            n_days: 1,
            cycle_length: 120,
            green_ratio: vec![0.1],
            occupancy_prob_green: 1.0,
            occupancy_prob_red: 0.0,
            correlation: 0,
            flip_noise: 0.0,
            seed: 3,
            start: 0,
        };
        let series = generate_synthetic(&spec).unwrap();
        let ones: usize = series[0].values()[..120].iter().map(|v| *v as usize).sum();
        assert_eq!(ones, 12);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let spec = SyntheticSpec {
            n_sensors: 2,
            n_days: 1,
            cycle_length: 60,
            ..SyntheticSpec::default()
        };
        let series = generate_synthetic(&spec).unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_csv(&series, &p1).unwrap();
        let back = ingest_csv(&p1, &IngestOptions::default()).unwrap();
        assert_eq!(series, back);
        write_csv(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
