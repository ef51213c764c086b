//! The discrete set `S_L`, its nearest-point quantizer, and the discretized
//! Gaussian channel between the two decision makers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Uniform grid of `len` points spaced `delta` apart, centered on zero.
///
/// `len` is always odd, so `0` is a grid point and odd-symmetric policies are
/// exactly representable. Point `i` is `(i - (len - 1) / 2) * delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    len: usize,
    delta: f64,
}

pub fn build_grid(len: usize, delta: f64) -> Result<Grid> {
    Grid::new(len, delta)
}

impl Grid {
    pub fn new(len: usize, delta: f64) -> Result<Self> {
        if len == 0 || len % 2 == 0 {
            return Err(Error::invalid("L", format!("grid size must be odd and positive, got {len}")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta", format!("spacing must be positive and finite, got {delta}")));
        }
        Ok(Grid { len, delta })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Index of the zero point.
    pub fn center(&self) -> usize {
        (self.len - 1) / 2
    }

    pub fn point(&self, index: usize) -> f64 {
        (index as f64 - self.center() as f64) * self.delta
    }

    pub fn max_point(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    /// Index of the point `-s` for the point at `index`.
    pub fn mirror(&self, index: usize) -> usize {
        self.len - 1 - index
    }

    /// Nearest grid index to `y`. Values beyond the extremes clamp; exact
    /// midpoints round away from zero so the quantizer is odd.
    pub fn quantize_index(&self, y: f64) -> Result<usize> {
        if !y.is_finite() {
            return Err(Error::NonFinite(y));
        }
        let half = self.center() as f64;
        let steps = (y / self.delta).round().clamp(-half, half);
        Ok((steps + half) as usize)
    }

    pub fn quantize(&self, y: f64) -> Result<f64> {
        self.quantize_index(y).map(|i| self.point(i))
    }

    /// Returns the index of `value` if it lies on the grid within `rel_tol * delta`.
    pub fn index_of(&self, value: f64, rel_tol: f64) -> Option<usize> {
        let idx = self.quantize_index(value).ok()?;
        ((self.point(idx) - value).abs() <= rel_tol * self.delta).then_some(idx)
    }
}

/// Non-zero part of one channel row: probabilities for cells `start..start + probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub start: usize,
    pub probs: Vec<f64>,
}

impl BandRow {
    /// Expands the row to a dense vector of length `len`.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut dense = vec![0.0; len];
        dense[self.start..self.start + self.probs.len()].copy_from_slice(&self.probs);
        dense
    }
}

/// `P(y2_cell | x1)` for an arbitrary real `x1`, with the outermost cells
/// absorbing the Gaussian tails.
pub fn channel_row_exact(grid: &Grid, x1: f64) -> Result<Vec<f64>> {
    if !x1.is_finite() {
        return Err(Error::NonFinite(x1));
    }
    let half = 0.5 * grid.delta();
    let last = grid.len() - 1;
    Ok((0..grid.len())
        .map(|j| {
            let s = grid.point(j);
            let lo = if j == 0 { f64::NEG_INFINITY } else { s - half - x1 };
            let hi = if j == last { f64::INFINITY } else { s + half - x1 };
            normal::interval_prob(lo, hi)
        })
        .collect())
}

/// Banded channel row for the grid point at `x1_index`, renormalized to sum to one.
pub fn channel_row_banded(grid: &Grid, x1_index: usize, band_halfwidth: usize) -> Result<BandRow> {
    if x1_index >= grid.len() {
        return Err(Error::invalid("x1_index", format!("{x1_index} out of range for L={}", grid.len())));
    }
    Ok(ChannelModel::new(*grid, band_halfwidth)?.row(x1_index))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RowMeta {
    start: usize,
    end: usize,
    left_tail: f64,
    right_tail: f64,
    inv_norm: f64,
}

/// Banded channel `P(y2_cell | x1)` for every grid point `x1`.
///
/// Interior cells depend only on the offset `|j - i|`, so one kernel of length
/// `band + 1` is shared by all rows; each row keeps its own tail-absorbing edge
/// cells and normalization factor.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    grid: Grid,
    band: usize,
    kernel: Vec<f64>,
    rows: Vec<RowMeta>,
}

impl ChannelModel {
    pub fn new(grid: Grid, band_halfwidth: usize) -> Result<Self> {
        if band_halfwidth < 1 {
            return Err(Error::invalid("band_halfwidth", "must be at least 1"));
        }
        let len = grid.len();
        let delta = grid.delta();
        // No row spans more than the whole grid.
        let band = band_halfwidth.min(len - 1).max(1);
        let kernel: Vec<f64> = (0..=band)
            .map(|d| normal::interval_prob((d as f64 - 0.5) * delta, (d as f64 + 0.5) * delta))
            .collect();
        let last = len - 1;
        let rows = (0..len)
            .map(|i| {
                let start = i.saturating_sub(band);
                let end = (i + band).min(last);
                let left_tail = normal::upper_tail((i as f64 - 0.5) * delta);
                let right_tail = normal::upper_tail(((last - i) as f64 - 0.5) * delta);
                let mut meta = RowMeta {
                    start,
                    end,
                    left_tail,
                    right_tail,
                    inv_norm: 1.0,
                };
                let total: f64 = (start..=end).map(|j| raw_prob(&kernel, &meta, len, i, j)).sum();
                meta.inv_norm = 1.0 / total;
                meta
            })
            .collect();
        Ok(ChannelModel {
            grid,
            band,
            kernel,
            rows,
        })
    }

    /// Band half-width covering `num_std` noise standard deviations.
    pub fn band_for(grid: &Grid, num_std: f64) -> usize {
        ((num_std / grid.delta()).ceil() as usize).max(1)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Inclusive range of cells with non-zero probability for row `i`.
    pub fn support(&self, i: usize) -> (usize, usize) {
        let m = &self.rows[i];
        (m.start, m.end)
    }

    /// `P(cell j | x1 = point i)`.
    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        let m = &self.rows[i];
        if j < m.start || j > m.end {
            return 0.0;
        }
        raw_prob(&self.kernel, m, self.grid.len(), i, j) * m.inv_norm
    }

    pub fn row(&self, i: usize) -> BandRow {
        let (start, end) = self.support(i);
        BandRow {
            start,
            probs: (start..=end).map(|j| self.prob(i, j)).collect(),
        }
    }
}

#[inline]
fn raw_prob(kernel: &[f64], m: &RowMeta, len: usize, i: usize, j: usize) -> f64 {
    if len == 1 {
        1.0
    } else if j == 0 {
        m.left_tail
    } else if j == len - 1 {
        m.right_tail
    } else {
        kernel[i.abs_diff(j)]
    }
}
