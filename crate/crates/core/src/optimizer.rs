//! Alternating best-response optimization of the two policies.
//!
//! With the second-stage table fixed, the first-stage objective for a sample
//! `x0` splits into `k^2 (x1 - x0)^2 + D(x1)`, where the distortion profile `D`
//! does not depend on `x0`. With the first stage fixed, the second-stage
//! optimum is the conditional mean of `x1` given the quantized observation,
//! which only needs the number of samples assigned to each level.
//!
//! [`run_relaxation`] drives the whole schedule: a decreasing sequence of `k`
//! values on the initial grid, then refinement to finer grids at the target `k`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactcost::{self, CostReport, QuadratureConfig};
use crate::grid::{ChannelModel, Grid};
use crate::policy::{extract_thresholds, InnerPolicySamples, InnerPolicyThresholds, OuterPolicy};

/// Relaxation schedule used unless overridden.
pub const DEFAULT_K_SCHEDULE: [f64; 8] = [3.0, 2.0, 1.5, 1.0, 0.6, 0.4, 0.3, 0.2];
/// Grid sizes; each grid contains the previous one.
pub const DEFAULT_L_SCHEDULE: [usize; 7] = [201, 401, 801, 1601, 3201, 6401, 12801];
pub const DEFAULT_SAMPLES: usize = 400_000;
pub const DEFAULT_STOP_THRESHOLD: f64 = 1e-7;
pub const DEFAULT_MAX_INNER_ITERATIONS: usize = 500;
/// Channel band half-width, in noise standard deviations.
pub const DEFAULT_BAND_STD: f64 = 8.0;
/// Relative slack allowed on the cost trace before an increase is an error.
pub const DESCENT_TOLERANCE: f64 = 1e-12;
/// Conditional means with a smaller denominator keep their previous value.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Weight of the first-stage control cost.
    pub k: f64,
    /// Standard deviation of the initial state.
    pub sigma: f64,
}

impl ProblemParams {
    pub fn new(k: f64, sigma: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid("k", format!("must be positive, got {k}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(ProblemParams { k, sigma })
    }
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams { k: 0.2, sigma: 5.0 }
    }
}

/// Grid spacing that keeps the grid extent at `±5 sigma` for every `L`.
pub fn delta_for(len: usize, sigma: f64) -> f64 {
    10.0 * sigma / (len - 1) as f64
}

/// Evenly spaced `k` values from `start` down to `target`, `steps` of them after `start`.
pub fn linear_k_schedule(start: f64, target: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            if i == steps {
                target
            } else {
                start + (target - start) * i as f64 / steps as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Strictly decreasing; the last entry is the target `k`.
    pub k_schedule: Vec<f64>,
    /// Strictly increasing odd grid sizes. The first is used for the whole
    /// `k` schedule, the rest are refinements at the target `k`.
    pub l_schedule: Vec<usize>,
    pub n_samples: usize,
    pub seed: u64,
    pub stop_threshold: f64,
    pub band_std: f64,
    pub max_inner_iterations: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            k_schedule: DEFAULT_K_SCHEDULE.to_vec(),
            l_schedule: DEFAULT_L_SCHEDULE.to_vec(),
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            band_std: DEFAULT_BAND_STD,
            max_inner_iterations: DEFAULT_MAX_INNER_ITERATIONS,
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_schedule.is_empty() {
            return Err(Error::invalid("k_schedule", "must not be empty"));
        }
        if self.k_schedule.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::invalid("k_schedule", "values must be positive and finite"));
        }
        if self.k_schedule.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("k_schedule", "must be strictly decreasing"));
        }
        if self.l_schedule.is_empty() {
            return Err(Error::invalid("l_schedule", "must not be empty"));
        }
        if let Some(&bad) = self.l_schedule.iter().find(|&&l| l < 3 || l % 2 == 0) {
            return Err(Error::invalid("l_schedule", format!("grid sizes must be odd and at least 3, got {bad}")));
        }
        if self.l_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("l_schedule", "must be strictly increasing"));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be positive"));
        }
        if !(self.stop_threshold > 0.0) {
            return Err(Error::invalid("stop_threshold", "must be positive"));
        }
        if !(self.band_std > 0.0 && self.band_std.is_finite()) {
            return Err(Error::invalid("band_std", "must be positive and finite"));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::invalid("max_inner_iterations", "must be positive"));
        }
        self.quadrature.validate()
    }

    pub fn k_target(&self) -> f64 {
        *self.k_schedule.last().expect("validated schedule")
    }
}

/// `n` draws of `|X0|`, `X0 ~ N(0, sigma^2)`, sorted ascending.
pub fn sample_source(n: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("sigma", e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = Vec::with_capacity(n);
    while samples.len() < n {
        let x: f64 = normal.sample(&mut rng);
        // zero has no sign; drop it so every sample is strictly positive
        if x != 0.0 {
            samples.push(x.abs());
        }
    }
    samples.sort_unstable_by(f64::total_cmp);
    // Exact duplicates would break the strictly ascending invariant.
    for i in 1..samples.len() {
        if samples[i] <= samples[i - 1] {
            samples[i] = samples[i - 1].next_up();
        }
    }
    Ok(samples)
}

/// `D(x1) = sum_y P(y | x1) (x1 - gamma2(y))^2` for every grid point.
pub fn distortion_profile(outer: &OuterPolicy, channel: &ChannelModel) -> Result<Vec<f64>> {
    let grid = channel.grid();
    if outer.grid() != grid {
        return Err(Error::GridMismatch("outer policy and channel use different grids".into()));
    }
    let values = outer.values();
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x1 = grid.point(i);
            let (start, end) = channel.support(i);
            (start..=end)
                .map(|j| {
                    let e = x1 - values[j];
                    channel.prob(i, j) * e * e
                })
                .sum()
        })
        .collect())
}

/// Lower envelope of the parabolas `k^2 (s_j - x)^2 + D_j` over `x`.
///
/// Dropping the shared `k^2 x^2` term leaves lines with slopes `-2 k^2 s_j`,
/// decreasing in `j`, so the envelope is a sequence of indices ascending in
/// `j` with breakpoints between them.
struct Envelope {
    indices: Vec<usize>,
    /// `breaks[m]` separates `indices[m]` (left, inclusive) from `indices[m + 1]`.
    breaks: Vec<f64>,
}

impl Envelope {
    fn build(grid: &Grid, d: &[f64], k: f64) -> Self {
        let k2 = k * k;
        // x where lines a < b tie
        let cross = |a: usize, b: usize| {
            let (sa, sb) = (grid.point(a), grid.point(b));
            0.5 * (sa + sb) + (d[b] - d[a]) / (2.0 * k2 * (sb - sa))
        };
        let mut indices: Vec<usize> = Vec::with_capacity(grid.len());
        let mut breaks: Vec<f64> = Vec::with_capacity(grid.len());
        for j in 0..grid.len() {
            loop {
                let Some(&top) = indices.last() else { break };
                let x = cross(top, j);
                if breaks.last().is_some_and(|&prev| x <= prev) {
                    indices.pop();
                    breaks.pop();
                } else {
                    breaks.push(x);
                    break;
                }
            }
            indices.push(j);
        }
        Envelope { indices, breaks }
    }

    /// Position in `indices` of the minimizing line at `x`.
    fn locate(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b < x)
    }
}

#[inline]
fn inner_objective(grid: &Grid, d: &[f64], k2: f64, j: usize, x0: f64) -> f64 {
    let e = grid.point(j) - x0;
    k2 * e * e + d[j]
}

/// Best response of the first stage: for each sample, the grid index
/// minimizing `k^2 (x1 - x0)^2 + D(x1)`, ties going to the smaller index.
pub fn update_inner(samples: &[f64], d: &[f64], k: f64, grid: &Grid) -> Result<Vec<usize>> {
    if d.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} distortion values for L={}", d.len(), grid.len())));
    }
    if let Some(&bad) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    let envelope = Envelope::build(grid, d, k);
    let k2 = k * k;
    let last = envelope.indices.len() - 1;
    Ok(samples
        .par_iter()
        .map(|&x0| {
            // settle rounding-level ties against the envelope neighbours directly
            let pos = envelope.locate(x0);
            let mut best = envelope.indices[pos];
            let mut best_val = inner_objective(grid, d, k2, best, x0);
            for p in [pos.saturating_sub(1), (pos + 1).min(last)] {
                let j = envelope.indices[p];
                let v = inner_objective(grid, d, k2, j, x0);
                if v < best_val || (v == best_val && j < best) {
                    best = j;
                    best_val = v;
                }
            }
            best
        })
        .collect())
}

/// Samples per level, counting only the positive half.
pub fn level_counts(assignments: &[usize], grid: &Grid) -> Vec<u64> {
    let mut counts = vec![0u64; grid.len()];
    for &a in assignments {
        counts[a] += 1;
    }
    counts
}

/// Adds the mirrored negative half: `c(-a) += c(a)`.
pub fn mirrored_counts(half_counts: &[u64], grid: &Grid) -> Vec<u64> {
    (0..grid.len())
        .map(|j| half_counts[j] + half_counts[grid.mirror(j)])
        .collect()
}

/// Best response of the second stage: the count-weighted conditional mean of
/// `x1` in each observation cell, symmetrized to an odd table. Cells no level
/// can reach keep their value from `previous`.
pub fn update_outer(counts: &[u64], channel: &ChannelModel, previous: &OuterPolicy) -> Result<OuterPolicy> {
    let grid = channel.grid();
    if counts.len() != grid.len() || previous.grid() != grid {
        return Err(Error::GridMismatch("counts, channel and previous policy must share a grid".into()));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Empty("level counts"));
    }
    let band = channel.band();
    let mut values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let lo = j.saturating_sub(band);
            let hi = (j + band).min(grid.len() - 1);
            let mut num = 0.0;
            let mut den = 0.0;
            for a in lo..=hi {
                if counts[a] == 0 {
                    continue;
                }
                let w = counts[a] as f64 * channel.prob(a, j);
                num += w * grid.point(a);
                den += w;
            }
            if den < DENOMINATOR_FLOOR {
                previous.value(j)
            } else {
                num / den
            }
        })
        .collect();
    // keep exact odd symmetry of the unreachable-cell fallback
    let mut outer = OuterPolicy::from_values(*grid, std::mem::take(&mut values))?;
    outer.symmetrize();
    Ok(outer)
}

/// Per-sample cost mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCostStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// `(1/n) sum_s [k^2 (x1(s) - x0(s))^2 + D(x1(s))]`.
pub fn sample_cost(samples: &[f64], assignments: &[usize], d: &[f64], k: f64, grid: &Grid) -> Result<f64> {
    sample_cost_stats(samples, assignments, d, k, grid).map(|s| s.mean)
}

pub fn sample_cost_stats(
    samples: &[f64],
    assignments: &[usize],
    d: &[f64],
    k: f64,
    grid: &Grid,
) -> Result<SampleCostStats> {
    if samples.len() != assignments.len() || samples.is_empty() {
        return Err(Error::invalid("assignments", "need one assignment per sample and at least one sample"));
    }
    if d.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} distortion values for L={}", d.len(), grid.len())));
    }
    let k2 = k * k;
    let per_sample = samples.iter().zip(assignments).map(|(&x0, &a)| inner_objective(grid, d, k2, a, x0));
    let n = samples.len() as f64;
    let mean = per_sample.clone().sum::<f64>() / n;
    let var = per_sample.map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(SampleCostStats {
        mean,
        std_dev: var.sqrt(),
    })
}

/// Everything the alternating updates need on one grid.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub grid: Grid,
    pub channel: ChannelModel,
    /// Positive-half samples of `|X0|`, ascending.
    pub samples: Vec<f64>,
    pub assignments: Vec<usize>,
    pub outer: OuterPolicy,
    /// Positive-half counts per level; they sum to the sample count.
    pub counts: Vec<u64>,
    /// Distortion profile of `outer`.
    pub distortion: Vec<f64>,
    pub cost: f64,
}

impl IterationState {
    /// Fresh state with `x1 = quantize(x0)` and the given second-stage table.
    pub fn new(samples: Vec<f64>, outer: OuterPolicy, band_std: f64) -> Result<Self> {
        let grid = *outer.grid();
        let channel = ChannelModel::new(grid, ChannelModel::band_for(&grid, band_std))?;
        let assignments = samples
            .iter()
            .map(|&x| grid.quantize_index(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(samples, assignments, outer, channel)
    }

    fn from_parts(samples: Vec<f64>, assignments: Vec<usize>, outer: OuterPolicy, channel: ChannelModel) -> Result<Self> {
        let grid = *channel.grid();
        let counts = level_counts(&assignments, &grid);
        let distortion = distortion_profile(&outer, &channel)?;
        Ok(IterationState {
            grid,
            channel,
            samples,
            assignments,
            outer,
            counts,
            distortion,
            cost: f64::INFINITY,
        })
    }

    /// Moves the state onto a finer grid with the same extent. The second
    /// stage is carried over by nearest point; assignments keep their levels.
    pub fn refine(self, new_grid: Grid, band_std: f64) -> Result<Self> {
        let outer = self.outer.refine(new_grid)?;
        let assignments = self
            .assignments
            .iter()
            .map(|&a| new_grid.quantize_index(self.grid.point(a)))
            .collect::<Result<Vec<_>>>()?;
        let channel = ChannelModel::new(new_grid, ChannelModel::band_for(&new_grid, band_std))?;
        Self::from_parts(self.samples, assignments, outer, channel)
    }

    pub fn sample_policy(&self) -> Result<InnerPolicySamples> {
        InnerPolicySamples::new(self.samples.clone(), self.assignments.clone(), &self.grid)
    }

    pub fn thresholds(&self) -> Result<InnerPolicyThresholds> {
        extract_thresholds(&self.sample_policy()?, &self.grid)
    }

    pub fn cost_stats(&self, k: f64) -> Result<SampleCostStats> {
        sample_cost_stats(&self.samples, &self.assignments, &self.distortion, k, &self.grid)
    }
}

/// Result of one inner convergence loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerRun {
    /// Sample cost after each iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Alternates the two best responses until the relative cost improvement
/// drops below `stop_threshold` or `max_iter` iterations have run.
///
/// The first iteration counts as a relative improvement of 1 (the previous
/// cost is infinite). An increase beyond [`DESCENT_TOLERANCE`] is an error;
/// `state` then holds the offending iterate.
pub fn converge_inner(state: &mut IterationState, k: f64, stop_threshold: f64, max_iter: usize) -> Result<InnerRun> {
    let mut previous = f64::INFINITY;
    let mut trace = Vec::new();
    for iteration in 1..=max_iter {
        state.assignments = update_inner(&state.samples, &state.distortion, k, &state.grid)?;
        state.counts = level_counts(&state.assignments, &state.grid);
        let weights = mirrored_counts(&state.counts, &state.grid);
        state.outer = update_outer(&weights, &state.channel, &state.outer)?;
        state.distortion = distortion_profile(&state.outer, &state.channel)?;
        let cost = sample_cost(&state.samples, &state.assignments, &state.distortion, k, &state.grid)?;
        state.cost = cost;
        trace.push(cost);

        if previous.is_finite() && cost > previous * (1.0 + DESCENT_TOLERANCE) {
            return Err(Error::Divergence {
                k,
                grid_len: state.grid.len(),
                iteration,
                previous,
                current: cost,
            });
        }
        let improvement = if previous.is_infinite() {
            1.0
        } else if previous > 0.0 {
            (previous - cost) / previous
        } else {
            0.0
        };
        previous = cost;
        if improvement < stop_threshold {
            return Ok(InnerRun { trace, converged: true });
        }
    }
    Ok(InnerRun { trace, converged: false })
}

/// One `(k, L)` stage of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: f64,
    pub grid_len: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub trace: Vec<f64>,
    /// Exact cost at the end of each grid level reached at the target `k`.
    pub exact: Option<CostReport>,
}

#[derive(Debug, Clone)]
pub struct RelaxationOutcome {
    pub params: ProblemParams,
    pub stages: Vec<StageRecord>,
    pub state: IterationState,
    pub thresholds: InnerPolicyThresholds,
    pub report: CostReport,
}

/// Error from [`run_relaxation`] together with the state at the time of failure, if any.
#[derive(Debug)]
pub struct RelaxationError {
    pub error: Error,
    pub state: Option<Box<IterationState>>,
}

impl std::fmt::Display for RelaxationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RelaxationError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RelaxationError {
    fn from(error: Error) -> Self {
        RelaxationError { error, state: None }
    }
}

pub fn run_relaxation(sigma: f64, config: &OptimizerConfig) -> std::result::Result<RelaxationOutcome, RelaxationError> {
    run_relaxation_with(sigma, config, |_| {})
}

/// Runs the full schedule, starting from `gamma2 = 0`. `on_stage` sees each
/// finished stage.
pub fn run_relaxation_with(
    sigma: f64,
    config: &OptimizerConfig,
    mut on_stage: impl FnMut(&StageRecord),
) -> std::result::Result<RelaxationOutcome, RelaxationError> {
    config.validate()?;
    let k_target = config.k_target();
    let params = ProblemParams::new(k_target, sigma)?;

    let first_len = config.l_schedule[0];
    let grid = Grid::new(first_len, delta_for(first_len, sigma))?;
    let samples = sample_source(config.n_samples, sigma, config.seed)?;
    let mut state = IterationState::new(samples, OuterPolicy::zeros(grid), config.band_std)?;
    let mut stages = Vec::new();

    let mut run_stage = |state: &mut IterationState, k: f64, at_target: bool| {
        let run = match converge_inner(state, k, config.stop_threshold, config.max_inner_iterations) {
            Ok(run) => run,
            Err(error) => {
                return Err(RelaxationError {
                    error,
                    state: Some(Box::new(state.clone())),
                })
            }
        };
        let exact = if at_target {
            let thresholds = state.thresholds()?;
            Some(exactcost::total_cost(&thresholds, &state.outer, &params, &config.quadrature)?)
        } else {
            None
        };
        let record = StageRecord {
            k,
            grid_len: state.grid.len(),
            iterations: run.trace.len(),
            converged: run.converged,
            final_cost: state.cost,
            trace: run.trace,
            exact,
        };
        on_stage(&record);
        stages.push(record);
        Ok(())
    };

    for (i, &k) in config.k_schedule.iter().enumerate() {
        run_stage(&mut state, k, i + 1 == config.k_schedule.len())?;
    }
    for &len in &config.l_schedule[1..] {
        let grid = Grid::new(len, delta_for(len, sigma))?;
        state = state.refine(grid, config.band_std)?;
        run_stage(&mut state, k_target, true)?;
    }

    let thresholds = state.thresholds()?;
    let report = stages
        .last()
        .and_then(|s| s.exact.clone())
        .expect("last stage runs at the target k");
    Ok(RelaxationOutcome {
        params,
        stages,
        state,
        thresholds,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, channel_row_exact};

    #[test]
    fn sampling_is_deterministic_and_sorted() {
        let a = sample_source(1000, 5.0, 42).unwrap();
        let b = sample_source(1000, 5.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a[0] > 0.0);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, sample_source(1000, 5.0, 43).unwrap());
        assert!(sample_source(0, 5.0, 1).is_err());
    }

    #[test]
    fn half_normal_sample_mean() {
        let n = 400_000;
        let x = sample_source(n, 5.0, 7).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        // sigma sqrt(2/pi) and sigma sqrt(1 - 2/pi)
        let expected = 3.989_422_804_014_327;
        let half_std = 3.014_051_374_945_435;
        assert!((mean - expected).abs() < 4.0 * half_std / (n as f64).sqrt());
    }

    #[test]
    fn zero_outer_gives_squared_distortion() {
        let g = build_grid(41, 0.5).unwrap();
        let ch = ChannelModel::new(g, 16).unwrap();
        let d = distortion_profile(&OuterPolicy::zeros(g), &ch).unwrap();
        for (i, v) in d.iter().enumerate() {
            let x = g.point(i);
            assert!((v - x * x).abs() <= 1e-12 * (x * x).max(1.0));
        }
    }

    #[test]
    fn identity_outer_distortion_at_origin() {
        let g = build_grid(3, 1.0).unwrap();
        let ch = ChannelModel::new(g, 1).unwrap();
        let outer = OuterPolicy::from_values(g, g.points()).unwrap();
        let d = distortion_profile(&outer, &ch).unwrap();
        assert!((d[1] - 0.617_075_077_451_973_8).abs() < 1e-15);
        assert!((d[0] - d[2]).abs() < 1e-12);
    }

    #[test]
    fn flat_distortion_reduces_to_quantizer() {
        let g = build_grid(21, 0.5).unwrap();
        let samples = sample_source(500, 2.0, 3).unwrap();
        let got = update_inner(&samples, &vec![0.0; 21], 0.7, &g).unwrap();
        for (x, a) in samples.iter().zip(&got) {
            assert_eq!(*a, g.quantize_index(*x).unwrap());
        }
    }

    fn brute_inner(samples: &[f64], d: &[f64], k: f64, g: &Grid) -> Vec<usize> {
        samples
            .iter()
            .map(|&x0| {
                let mut best = 0;
                for j in 1..g.len() {
                    let v = k * k * (g.point(j) - x0).powi(2) + d[j];
                    let b = k * k * (g.point(best) - x0).powi(2) + d[best];
                    if v < b {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn zero_outer_inner_update_beats_shrunk_quantizer() {
        let g = build_grid(201, 0.25).unwrap();
        let ch = ChannelModel::new(g, 32).unwrap();
        let d = distortion_profile(&OuterPolicy::zeros(g), &ch).unwrap();
        let samples = sample_source(2000, 5.0, 11).unwrap();
        for k in [0.2, 0.6, 3.0] {
            let got = update_inner(&samples, &d, k, &g).unwrap();
            assert_eq!(got, brute_inner(&samples, &d, k, &g));
            let k2 = k * k;
            for (x0, &a) in samples.iter().zip(&got) {
                let shrunk = g.quantize_index(x0 * k2 / (1.0 + k2)).unwrap();
                let obj = |j: usize| k2 * (g.point(j) - x0).powi(2) + d[j];
                assert!(obj(a) <= obj(shrunk));
                if k == 3.0 && *x0 < 20.0 {
                    assert!((g.point(a) - 0.9 * x0).abs() <= g.delta());
                }
            }
        }
    }

    #[test]
    fn inner_update_matches_brute_force_on_rough_profiles() {
        let g = build_grid(31, 0.4).unwrap();
        let samples = sample_source(300, 3.0, 5).unwrap();
        // deliberately non-convex profile
        let d: Vec<f64> = (0..31).map(|i| ((i * 7919) % 13) as f64 * 0.3 + 0.01 * i as f64).collect();
        for k in [0.05, 0.3, 1.0, 4.0] {
            assert_eq!(update_inner(&samples, &d, k, &g).unwrap(), brute_inner(&samples, &d, k, &g));
        }
    }

    #[test]
    fn inner_update_prefers_smaller_index_on_ties() {
        let g = build_grid(3, 1.0).unwrap();
        // x0 = 0.5 is equidistant from 0 and 1 with flat distortion
        assert_eq!(update_inner(&[0.5], &[0.0; 3], 1.0, &g).unwrap(), vec![1]);
    }

    #[test]
    fn outer_update_point_mass_and_symmetric_mass() {
        let g = build_grid(11, 0.5).unwrap();
        let ch = ChannelModel::new(g, 16).unwrap();
        let prev = OuterPolicy::zeros(g);
        let mut counts = vec![0u64; 11];
        counts[5] = 4;
        counts[3] = 2;
        counts[7] = 2;
        let out = update_outer(&counts, &ch, &prev).unwrap();
        assert_eq!(out.value(5), 0.0);
        assert!(matches!(update_outer(&vec![0; 11], &ch, &prev), Err(Error::Empty(_))));
    }

    #[test]
    fn outer_update_without_mirror_is_a_point_mass_mean() {
        // symmetrization would fold a one-sided mass; check the raw conditional mean
        let g = build_grid(11, 0.5).unwrap();
        let ch = ChannelModel::new(g, 16).unwrap();
        let mut counts = vec![0u64; 11];
        counts[8] = 5;
        let band = ch.band();
        for j in 0..11usize {
            let lo = j.saturating_sub(band);
            let hi = (j + band).min(10);
            let (mut num, mut den) = (0.0, 0.0);
            for a in lo..=hi {
                let w = counts[a] as f64 * ch.prob(a, j);
                num += w * g.point(a);
                den += w;
            }
            assert!((num / den - g.point(8)).abs() < 1e-15);
        }
    }

    #[test]
    fn outer_update_matches_per_sample_mean() {
        let g = build_grid(9, 0.75).unwrap();
        let ch = ChannelModel::new(g, 20).unwrap();
        let one = g.index_of(0.75, 1e-9).unwrap();
        let two = g.index_of(1.5, 1e-9).unwrap();
        let assignments = [one, one, one, two];
        let weights = mirrored_counts(&level_counts(&assignments, &g), &g);
        let out = update_outer(&weights, &ch, &OuterPolicy::zeros(g)).unwrap();
        for j in 0..g.len() {
            let (mut num, mut den) = (0.0, 0.0);
            for &a in &assignments {
                for x1 in [g.point(a), -g.point(a)] {
                    let p = channel_row_exact(&g, x1).unwrap()[j];
                    num += p * x1;
                    den += p;
                }
            }
            assert!((out.value(j) - num / den).abs() < 1e-12, "cell {j}");
        }
    }

    #[test]
    fn sample_cost_baselines() {
        let g = build_grid(101, 0.2).unwrap();
        let ch = ChannelModel::new(g, 40).unwrap();
        let samples = sample_source(5000, 5.0, 9).unwrap();
        let d = distortion_profile(&OuterPolicy::zeros(g), &ch).unwrap();
        let k = 0.2;
        let at_zero = vec![g.center(); samples.len()];
        let j = sample_cost(&samples, &at_zero, &d, k, &g).unwrap();
        let second_moment = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
        assert!((j - k * k * second_moment).abs() < 1e-12);

        let q: Vec<usize> = samples.iter().map(|&x| g.quantize_index(x).unwrap()).collect();
        let j = sample_cost(&samples, &q, &d, k, &g).unwrap();
        let plug_in = samples
            .iter()
            .zip(&q)
            .map(|(x, &a)| k * k * (g.point(a) - x).powi(2) + g.point(a).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        assert!((j - plug_in).abs() < 1e-10);
    }

    #[test]
    fn infinite_stop_threshold_runs_once() {
        let samples = sample_source(2000, 5.0, 1).unwrap();
        let g = build_grid(51, 1.0).unwrap();
        let mut state = IterationState::new(samples, OuterPolicy::zeros(g), 8.0).unwrap();
        let run = converge_inner(&mut state, 1.0, f64::INFINITY, 50).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert!(run.converged);
    }

    #[test]
    fn fixed_point_stops_on_second_pass() {
        let samples = sample_source(2000, 5.0, 1).unwrap();
        let g = build_grid(51, 1.0).unwrap();
        let mut state = IterationState::new(samples, OuterPolicy::zeros(g), 8.0).unwrap();
        let first = converge_inner(&mut state, 0.5, 1e-15, 500).unwrap();
        assert!(first.converged);
        let again = converge_inner(&mut state, 0.5, 1e-15, 500).unwrap();
        assert!(again.trace.len() <= 2);
        assert!(again.converged);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        assert!(c.validate().is_ok());
        c.k_schedule = vec![1.0, 2.0];
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { field: "k_schedule", .. })));
        c = OptimizerConfig::default();
        c.l_schedule = vec![200];
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { field: "l_schedule", .. })));
        c.l_schedule = vec![401, 201];
        assert!(c.validate().is_err());
        c = OptimizerConfig::default();
        c.stop_threshold = 0.0;
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { field: "stop_threshold", .. })));
    }

    #[test]
    fn linear_schedule_ends_at_target() {
        let s = linear_k_schedule(3.0, 0.2, 4);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], 3.0);
        assert_eq!(s[4], 0.2);
        assert!(s.windows(2).all(|w| w[0] > w[1]));
    }
}
