//! Conversion of GeneNetWeaver-style time series into binary trajectories.
//!
//! Input is tab separated: a header row `Time<TAB>gene1<TAB>gene2...`
//! followed by rows of a sample time and one activation per gene. Blank lines
//! separate independent experiments; a block may repeat the header.
//! Double quotes around fields are ignored.

use std::io::BufRead;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Event, Trajectory};

/// Offset between simultaneous crossings serialized into distinct events.
pub const SIMULTANEITY_EPSILON: f64 = 1e-9;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_TRANSITIONS: usize = 8;

/// One experiment: `values[i][n]` is gene `n` at `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn fields(line: &str) -> Vec<String> {
    line.split('\t').map(|f| f.trim().trim_matches('"').to_string()).collect()
}

/// Parses every experiment block of a TSV stream.
pub fn parse_timeseries<R: BufRead>(reader: R) -> Result<Vec<TimeSeries>> {
    let mut names: Option<Vec<String>> = None;
    let mut out = Vec::new();
    let mut current: Option<TimeSeries> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        if line.trim().is_empty() {
            out.extend(current.take());
            continue;
        }
        let row = fields(&line);
        let Some(header) = &names else {
            if row.len() < 2 {
                return Err(parse_err("header needs a time column and at least one gene".into()));
            }
            names = Some(row[1..].to_vec());
            continue;
        };
        if row.len() != header.len() + 1 {
            return Err(parse_err(format!("expected {} fields, found {}", header.len() + 1, row.len())));
        }
        if current.is_none() && row[1..] == header[..] {
            continue;
        }
        let nums = row
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("malformed number {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        let ts = current.get_or_insert_with(|| TimeSeries { names: header.clone(), times: Vec::new(), values: Vec::new() });
        if ts.times.last().is_some_and(|&t| nums[0] <= t) {
            return Err(parse_err(format!("time {} does not increase", nums[0])));
        }
        ts.times.push(nums[0]);
        ts.values.push(nums[1..].to_vec());
    }
    out.extend(current);
    Ok(out)
}

pub fn load_timeseries(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let file = std::fs::File::open(path)?;
    parse_timeseries(std::io::BufReader::new(file))
}

/// Thresholds a series into a binary trajectory starting at its first sample.
///
/// Levels hold between samples. When several genes cross at one sample they
/// become separate events `SIMULTANEITY_EPSILON` apart in ascending gene
/// order. The observation ends `N · SIMULTANEITY_EPSILON` after the last
/// sample so that events at the last sample stay inside the window.
pub fn discretize(ts: &TimeSeries, threshold: f64) -> Trajectory {
    let level = |v: f64| usize::from(v >= threshold);
    let n_genes = ts.names.len();
    let Some(first) = ts.values.first() else {
        return Trajectory { initial: crate::model::ClockedState::fresh(vec![0; n_genes]), events: Vec::new(), end_time: 0.0 };
    };
    let t0 = ts.times[0];
    let mut held: Vec<usize> = first.iter().map(|&v| level(v)).collect();
    let initial = crate::model::ClockedState::fresh(held.clone());
    let mut events = Vec::new();
    for (t, row) in ts.times.iter().zip(&ts.values).skip(1) {
        let mut j = 0;
        for (n, &v) in row.iter().enumerate() {
            let l = level(v);
            if l != held[n] {
                events.push(Event { time: (t - t0) + j as f64 * SIMULTANEITY_EPSILON, node: n, state: l });
                held[n] = l;
                j += 1;
            }
        }
    }
    let end_time = (ts.times[ts.times.len() - 1] - t0) + n_genes as f64 * SIMULTANEITY_EPSILON;
    Trajectory { initial, events, end_time }
}

/// Keeps trajectories with at least `min_events` events.
pub fn filter_min_transitions(trajs: Vec<Trajectory>, min_events: usize) -> Vec<Trajectory> {
    trajs.into_iter().filter(|t| t.events.len() >= min_events).collect()
}
