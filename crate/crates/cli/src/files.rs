//! CSV files for policies, traces and plot data.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces the in-memory values bit for bit. Grid levels are
//! stored by index next to their values.

use std::fs;
use std::path::Path;

use witsen_core::{Grid, InnerPolicyThresholds, OuterPolicy, StageRecord};

use crate::error::CliError;

pub const THRESHOLDS_HEADER: [&str; 5] = ["segment", "A_lo", "A_hi", "alpha_index", "alpha_value"];
pub const OUTER_HEADER: [&str; 3] = ["y2_index", "y2_value", "gamma2_value"];
pub const TRACE_HEADER: [&str; 4] = ["stage_k", "stage_L", "iter", "J_sample"];
pub const PLOT_HEADER: [&str; 2] = ["x0", "gamma1"];
pub const PLOT_POINTS: usize = 2001;

fn to_csv<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn thresholds_csv(t: &InnerPolicyThresholds) -> Vec<u8> {
    to_csv(
        &THRESHOLDS_HEADER,
        t.segments().enumerate().map(|(i, (lo, hi, level))| {
            vec![
                i.to_string(),
                lo.to_string(),
                hi.to_string(),
                level.to_string(),
                t.grid().point(level).to_string(),
            ]
        }),
    )
}

pub fn outer_csv(outer: &OuterPolicy) -> Vec<u8> {
    let grid = outer.grid();
    to_csv(
        &OUTER_HEADER,
        outer
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| vec![j.to_string(), grid.point(j).to_string(), v.to_string()]),
    )
}

pub fn trace_csv(stages: &[StageRecord]) -> Vec<u8> {
    to_csv(
        &TRACE_HEADER,
        stages.iter().flat_map(|s| {
            s.trace.iter().enumerate().map(move |(i, j)| {
                vec![s.k.to_string(), s.grid_len.to_string(), (i + 1).to_string(), j.to_string()]
            })
        }),
    )
}

/// The staircase sampled at [`PLOT_POINTS`] evenly spaced points of `[-2 sigma, 2 sigma]`.
pub fn plot_csv(t: &InnerPolicyThresholds, sigma: f64) -> Vec<u8> {
    let last = (PLOT_POINTS - 1) as f64;
    to_csv(
        &PLOT_HEADER,
        (0..PLOT_POINTS).map(|i| {
            let x0 = -2.0 * sigma + 4.0 * sigma * i as f64 / last;
            vec![x0.to_string(), t.evaluate(x0).to_string()]
        }),
    )
}

pub fn write_thresholds(path: &Path, t: &InnerPolicyThresholds) -> Result<(), CliError> {
    write(path, &thresholds_csv(t))
}

pub fn write_outer(path: &Path, outer: &OuterPolicy) -> Result<(), CliError> {
    write(path, &outer_csv(outer))
}

pub fn write_trace(path: &Path, stages: &[StageRecord]) -> Result<(), CliError> {
    write(path, &trace_csv(stages))
}

pub fn write_plot(path: &Path, t: &InnerPolicyThresholds, sigma: f64) -> Result<(), CliError> {
    write(path, &plot_csv(t, sigma))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let found = r.headers().map_err(|e| CliError::format(path, e.to_string()))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(
            path,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::format(path, e.to_string()))
}

fn field<T: std::str::FromStr>(path: &Path, row: &csv::StringRecord, i: usize, line: usize) -> Result<T, CliError> {
    row.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::format(path, format!("row {line}: bad value in column {i}")))
}

/// Reads an outer-policy table and reconstructs its grid.
pub fn read_outer(path: &Path) -> Result<OuterPolicy, CliError> {
    let rows = read_rows(path, &OUTER_HEADER)?;
    if rows.len() < 3 || rows.len() % 2 == 0 {
        return Err(CliError::format(path, format!("need an odd number of at least 3 grid rows, found {}", rows.len())));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        let idx: usize = field(path, row, 0, line)?;
        if idx != line {
            return Err(CliError::format(path, format!("row {line}: index {idx} out of order")));
        }
        points.push(field::<f64>(path, row, 1, line)?);
        values.push(field::<f64>(path, row, 2, line)?);
    }
    // the point right above zero is exactly one spacing
    let center = (rows.len() - 1) / 2;
    let grid = Grid::new(rows.len(), points[center + 1]).map_err(|e| CliError::format(path, e.to_string()))?;
    if let Some(j) = (0..grid.len()).find(|&j| grid.point(j) != points[j]) {
        return Err(CliError::format(path, format!("row {j}: y2_value is not on a uniform centered grid")));
    }
    OuterPolicy::from_values(grid, values).map_err(|e| CliError::format(path, e.to_string()))
}

/// Reads a staircase whose levels live on `grid`.
pub fn read_thresholds(path: &Path, grid: &Grid) -> Result<InnerPolicyThresholds, CliError> {
    let rows = read_rows(path, &THRESHOLDS_HEADER)?;
    if rows.is_empty() {
        return Err(CliError::format(path, "no segments"));
    }
    let mut thresholds = Vec::with_capacity(rows.len());
    let mut levels = Vec::with_capacity(rows.len());
    let mut previous_hi = f64::NEG_INFINITY;
    for (line, row) in rows.iter().enumerate() {
        let seg: usize = field(path, row, 0, line)?;
        let lo: f64 = field(path, row, 1, line)?;
        let hi: f64 = field(path, row, 2, line)?;
        let level: usize = field(path, row, 3, line)?;
        let value: f64 = field(path, row, 4, line)?;
        if seg != line || lo != previous_hi {
            return Err(CliError::format(path, format!("row {line}: segments must be contiguous and in order")));
        }
        if level >= grid.len() || grid.point(level) != value {
            return Err(CliError::format(path, format!("row {line}: level {level} = {value} is not on the grid")));
        }
        if line + 1 < rows.len() {
            thresholds.push(hi);
        } else if hi != f64::INFINITY {
            return Err(CliError::format(path, "last segment must extend to inf"));
        }
        levels.push(level);
        previous_hi = hi;
    }
    InnerPolicyThresholds::new(*grid, thresholds, levels).map_err(|e| CliError::format(path, e.to_string()))
}
