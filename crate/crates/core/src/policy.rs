//! Representations of the two decision functions.
//!
//! The first-stage map `x0 -> x1` lives either as per-sample grid assignments
//! over the positive half-line ([`InnerPolicySamples`]) or as a staircase over
//! all of the real line ([`InnerPolicyThresholds`]). The second-stage map is a
//! lookup table over grid points ([`OuterPolicy`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Positive-half Monte-Carlo representation of the first-stage policy.
///
/// The full-line policy is the odd extension: `x1(-x0) = -x1(x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPolicySamples {
    x0: Vec<f64>,
    assignments: Vec<usize>,
}

impl InnerPolicySamples {
    pub fn new(x0: Vec<f64>, assignments: Vec<usize>, grid: &Grid) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::Empty("inner policy samples"));
        }
        if x0.len() != assignments.len() {
            return Err(Error::invalid(
                "assignments",
                format!("{} assignments for {} samples", assignments.len(), x0.len()),
            ));
        }
        if !(x0[0] > 0.0) || x0.windows(2).any(|w| !(w[0] < w[1])) || !x0[x0.len() - 1].is_finite() {
            return Err(Error::invalid("x0_samples", "samples must be positive, finite and strictly ascending"));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= grid.len()) {
            return Err(Error::invalid("assignments", format!("index {bad} out of range for L={}", grid.len())));
        }
        Ok(InnerPolicySamples { x0, assignments })
    }

    pub fn samples(&self) -> &[f64] {
        &self.x0
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }
}

/// Staircase form of the first-stage policy over the whole real line:
/// `x1(x0) = level_i` for `A_i <= x0 < A_{i+1}`, with `A_0 = -inf`, `A_M = +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerPolicyThresholds {
    grid: Grid,
    /// Interior thresholds `A_1 .. A_{M-1}`.
    thresholds: Vec<f64>,
    /// Grid indices of the levels, one per segment.
    levels: Vec<usize>,
}

impl InnerPolicyThresholds {
    /// Builds a staircase from interior thresholds and level indices.
    pub fn new(grid: Grid, thresholds: Vec<f64>, levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Empty("staircase levels"));
        }
        if thresholds.len() + 1 != levels.len() {
            return Err(Error::invalid(
                "thresholds",
                format!("{} interior thresholds for {} levels", thresholds.len(), levels.len()),
            ));
        }
        if thresholds.iter().any(|a| !a.is_finite()) || thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("thresholds", "interior thresholds must be finite and strictly increasing"));
        }
        if let Some(&bad) = levels.iter().find(|&&l| l >= grid.len()) {
            return Err(Error::invalid("levels", format!("index {bad} out of range for L={}", grid.len())));
        }
        Ok(InnerPolicyThresholds {
            grid,
            thresholds,
            levels,
        })
    }

    /// Constant map `x1 = point(level)`.
    pub fn constant(grid: Grid, level: usize) -> Result<Self> {
        Self::new(grid, Vec::new(), vec![level])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of segments `M`.
    pub fn segment_count(&self) -> usize {
        self.levels.len()
    }

    pub fn interior_thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn level_indices(&self) -> &[usize] {
        &self.levels
    }

    pub fn level_value(&self, segment: usize) -> f64 {
        self.grid.point(self.levels[segment])
    }

    /// `(A_i, A_{i+1})` for segment `i`, with infinite outer ends.
    pub fn bounds(&self, segment: usize) -> (f64, f64) {
        let lo = if segment == 0 { f64::NEG_INFINITY } else { self.thresholds[segment - 1] };
        let hi = self.thresholds.get(segment).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.segment_count()).map(move |i| {
            let (lo, hi) = self.bounds(i);
            (lo, hi, self.levels[i])
        })
    }

    /// Level index of the segment containing `x0` (half-open on the right).
    pub fn evaluate_index(&self, x0: f64) -> usize {
        self.levels[self.thresholds.partition_point(|&a| a <= x0)]
    }

    pub fn evaluate(&self, x0: f64) -> f64 {
        self.grid.point(self.evaluate_index(x0))
    }

    /// Same staircase with every level negated (mirror about the origin).
    pub fn negated(&self) -> Self {
        InnerPolicyThresholds {
            grid: self.grid,
            thresholds: self.thresholds.iter().rev().map(|a| -a).collect(),
            levels: self.levels.iter().rev().map(|&l| self.grid.mirror(l)).collect(),
        }
    }
}

pub fn evaluate_inner(t: &InnerPolicyThresholds, x0: f64) -> f64 {
    t.evaluate(x0)
}

/// Converts sample assignments into a full-line staircase.
///
/// Runs of equal assignments become segments with thresholds at the midpoint
/// between the last sample of one run and the first of the next. The positive
/// half is mirrored with negated levels; the two halves meet at 0 unless the
/// innermost level is the zero point, in which case one segment spans the origin.
pub fn extract_thresholds(policy: &InnerPolicySamples, grid: &Grid) -> Result<InnerPolicyThresholds> {
    let x0 = policy.samples();
    let assigned = policy.assignments();
    if x0.is_empty() {
        return Err(Error::Empty("inner policy samples"));
    }
    if let Some(&bad) = assigned.iter().find(|&&a| a >= grid.len()) {
        return Err(Error::invalid("assignments", format!("index {bad} out of range for L={}", grid.len())));
    }

    let mut half_levels = vec![assigned[0]];
    let mut half_thresholds = Vec::new();
    for s in 1..x0.len() {
        if assigned[s] != assigned[s - 1] {
            half_levels.push(assigned[s]);
            half_thresholds.push(0.5 * (x0[s - 1] + x0[s]));
        }
    }

    let mut levels: Vec<usize> = half_levels.iter().rev().map(|&l| grid.mirror(l)).collect();
    let mut thresholds: Vec<f64> = half_thresholds.iter().rev().map(|a| -a).collect();
    if half_levels[0] == grid.center() {
        levels.pop();
    } else {
        thresholds.push(0.0);
    }
    levels.extend_from_slice(&half_levels);
    thresholds.extend_from_slice(&half_thresholds);
    InnerPolicyThresholds::new(*grid, thresholds, levels)
}

/// Number of plateau clusters in the staircase: maximal runs of consecutive
/// segments whose neighbouring levels differ by less than `jump_threshold`.
pub fn count_macro_steps(t: &InnerPolicyThresholds, jump_threshold: f64) -> usize {
    1 + (1..t.segment_count())
        .filter(|&i| (t.level_value(i) - t.level_value(i - 1)).abs() >= jump_threshold)
        .count()
}

/// Plateaus per half-line, the usual way these staircases are named: a
/// plateau straddling the origin counts as half a step on each side.
pub fn step_label(t: &InnerPolicyThresholds, jump_threshold: f64) -> f64 {
    count_macro_steps(t, jump_threshold) as f64 / 2.0
}

/// Second-stage lookup table, one output per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterPolicy {
    grid: Grid,
    values: Vec<f64>,
}

impl OuterPolicy {
    pub fn zeros(grid: Grid) -> Self {
        OuterPolicy {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for L={}", values.len(), grid.len())));
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(OuterPolicy { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Replaces the table by its odd part, `v(y) <- (v(y) - v(-y)) / 2`.
    pub fn symmetrize(&mut self) {
        let len = self.values.len();
        for j in 0..len / 2 {
            let m = len - 1 - j;
            let odd = 0.5 * (self.values[m] - self.values[j]);
            self.values[j] = -odd;
            self.values[m] = odd;
        }
        self.values[len / 2] = 0.0;
    }

    /// Carries the table over to a finer grid with the same extent:
    /// each new point takes the value of its nearest old point.
    pub fn refine(&self, new_grid: Grid) -> Result<OuterPolicy> {
        let old_max = self.grid.max_point();
        let new_max = new_grid.max_point();
        if (old_max - new_max).abs() > 1e-9 * old_max.abs().max(new_max.abs()).max(f64::MIN_POSITIVE) {
            return Err(Error::GridMismatch(format!(
                "grid extents differ: {old_max} (L={}) vs {new_max} (L={})",
                self.grid.len(),
                new_grid.len()
            )));
        }
        if new_grid.len() < self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "refinement cannot shrink the grid ({} -> {})",
                self.grid.len(),
                new_grid.len()
            )));
        }
        let values = (0..new_grid.len())
            .map(|j| Ok(self.values[self.grid.quantize_index(new_grid.point(j))?]))
            .collect::<Result<Vec<_>>>()?;
        Ok(OuterPolicy { grid: new_grid, values })
    }
}
