//! Final cost of a staircase policy pair, `J = J1 + J2`.
//!
//! `J1 = k^2 sum_i int_{A_i}^{A_{i+1}} p(x0) (alpha_i - x0)^2 dx0` and
//! `J2 = sum_i S_i int_{A_i}^{A_{i+1}} p(x0) dx0` with
//! `S_i = sum_y P(y | alpha_i) (alpha_i - gamma2(y))^2` over the full
//! tail-absorbing channel. Segment integrals are evaluated either from
//! truncated-Gaussian moments or by adaptive Gauss-Kronrod quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::channel_row_exact;
use crate::normal;
use crate::optimizer::ProblemParams;
use crate::policy::{InnerPolicyThresholds, OuterPolicy};

pub mod quadrature;

/// Assumed relative accuracy of one normal tail-probability evaluation.
pub const CDF_PRECISION: f64 = 4.0 * f64::EPSILON;
/// Quadrature domains are clipped to `±CLIP_STD * sigma`.
pub const CLIP_STD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Absolute tolerance charged to each segment integral.
    pub tol: f64,
    pub method: CostMethod,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            tol: 1e-18,
            method: CostMethod::ClosedForm,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    pub fn quadrature(tol: f64) -> Self {
        QuadratureConfig {
            tol,
            method: CostMethod::Quadrature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub j1: f64,
    pub j2: f64,
    pub total: f64,
    /// `quadrature_bound + cdf_slack + clip_bound`.
    pub error_bound: f64,
    /// Change in `J` when `tol` is added to every segment integral.
    pub quadrature_bound: f64,
    /// Propagated normal-CDF rounding.
    pub cdf_slack: f64,
    /// Integrand mass discarded by clipping (quadrature mode only).
    pub clip_bound: f64,
    pub segments: usize,
}

/// `int_a^b phi_sigma(x) dx`.
pub fn gaussian_mass(a: f64, b: f64, sigma: f64) -> f64 {
    normal::interval_prob(a / sigma, b / sigma)
}

/// `int_a^b phi_sigma(x) (x - alpha)^2 dx` from truncated-Gaussian moments.
pub fn gaussian_second_moment(a: f64, b: f64, alpha: f64, sigma: f64) -> f64 {
    let (za, zb) = (a / sigma, b / sigma);
    let mass = normal::interval_prob(za, zb);
    let (pa, pb) = (normal::pdf(za), normal::pdf(zb));
    // z phi(z) vanishes at infinite ends
    let zp = |z: f64, p: f64| if z.is_infinite() { 0.0 } else { z * p };
    sigma * sigma * (mass + zp(za, pa) - zp(zb, pb)) + 2.0 * alpha * sigma * (pb - pa) + alpha * alpha * mass
}

fn validate(t: &InnerPolicyThresholds) -> Result<()> {
    if t.interior_thresholds().windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("thresholds", "must be strictly increasing"));
    }
    Ok(())
}

fn clipped(a: f64, b: f64, sigma: f64) -> Option<(f64, f64)> {
    let (lo, hi) = (a.max(-CLIP_STD * sigma), b.min(CLIP_STD * sigma));
    (lo < hi).then_some((lo, hi))
}

fn stage1_segment(a: f64, b: f64, alpha: f64, sigma: f64, q: &QuadratureConfig) -> f64 {
    match q.method {
        CostMethod::ClosedForm => gaussian_second_moment(a, b, alpha, sigma),
        CostMethod::Quadrature => clipped(a, b, sigma).map_or(0.0, |(lo, hi)| {
            quadrature::integrate(|x| normal::pdf(x / sigma) / sigma * (alpha - x) * (alpha - x), lo, hi, q.tol).value
        }),
    }
}

fn mass_segment(a: f64, b: f64, sigma: f64, q: &QuadratureConfig) -> f64 {
    match q.method {
        CostMethod::ClosedForm => gaussian_mass(a, b, sigma),
        CostMethod::Quadrature => clipped(a, b, sigma).map_or(0.0, |(lo, hi)| {
            quadrature::integrate(|x| normal::pdf(x / sigma) / sigma, lo, hi, q.tol).value
        }),
    }
}

/// `J1` for first-stage weight `k` and source standard deviation `sigma`.
pub fn stage1_cost(t: &InnerPolicyThresholds, k: f64, sigma: f64, q: &QuadratureConfig) -> Result<f64> {
    validate(t)?;
    q.validate()?;
    let sum: f64 = (0..t.segment_count())
        .map(|i| {
            let (a, b) = t.bounds(i);
            stage1_segment(a, b, t.level_value(i), sigma, q)
        })
        .sum();
    Ok(k * k * sum)
}

/// Probability mass of each segment under `N(0, sigma^2)`.
pub fn segment_masses(t: &InnerPolicyThresholds, sigma: f64, q: &QuadratureConfig) -> Vec<f64> {
    (0..t.segment_count())
        .map(|i| {
            let (a, b) = t.bounds(i);
            mass_segment(a, b, sigma, q)
        })
        .collect()
}

/// `S(alpha) = sum_y P(y | alpha) (alpha - gamma2(y))^2` for each distinct level,
/// indexed by grid index.
fn residuals(t: &InnerPolicyThresholds, outer: &OuterPolicy) -> Result<Vec<Option<(f64, f64)>>> {
    let grid = t.grid();
    if outer.grid() != grid {
        return Err(Error::GridMismatch("staircase levels and outer policy use different grids".into()));
    }
    let mut cache: Vec<Option<(f64, f64)>> = vec![None; grid.len()];
    for &level in t.level_indices() {
        if cache[level].is_some() {
            continue;
        }
        let alpha = grid.point(level);
        let row = channel_row_exact(grid, alpha)?;
        let (mut s, mut slack) = (0.0, 0.0);
        let half = 0.5 * grid.delta();
        for (j, (p, g)) in row.iter().zip(outer.values()).enumerate() {
            let e = (alpha - g) * (alpha - g);
            s += p * e;
            // a cell is a difference of two tail probabilities, the larger
            // of which sits at the cell edge nearest to alpha
            let gap = ((grid.point(j) - alpha).abs() - half).max(0.0);
            slack += 2.0 * CDF_PRECISION * normal::upper_tail(gap) * e;
        }
        cache[level] = Some((s, slack));
    }
    Ok(cache)
}

pub fn stage2_cost(t: &InnerPolicyThresholds, outer: &OuterPolicy, sigma: f64, q: &QuadratureConfig) -> Result<f64> {
    validate(t)?;
    q.validate()?;
    let res = residuals(t, outer)?;
    let masses = segment_masses(t, sigma, q);
    Ok(t
        .level_indices()
        .iter()
        .zip(&masses)
        .map(|(&l, m)| res[l].expect("cached").0 * m)
        .sum())
}

/// `J1`, `J2` and an absolute error bound for the pair of policies.
pub fn total_cost(
    t: &InnerPolicyThresholds,
    outer: &OuterPolicy,
    params: &ProblemParams,
    q: &QuadratureConfig,
) -> Result<CostReport> {
    validate(t)?;
    q.validate()?;
    let (k2, sigma) = (params.k * params.k, params.sigma);
    let res = residuals(t, outer)?;
    let masses = segment_masses(t, sigma, q);

    let mut j1_sum = 0.0;
    let mut j2 = 0.0;
    let mut quad_bound = 0.0;
    let mut cdf_slack = 0.0;
    let mut max_level: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    for i in 0..t.segment_count() {
        let (a, b) = t.bounds(i);
        let alpha = t.level_value(i);
        let (s, s_slack) = res[t.level_indices()[i]].expect("cached");
        j1_sum += stage1_segment(a, b, alpha, sigma, q);
        j2 += s * masses[i];
        quad_bound += k2 * q.tol + s * q.tol;
        // two CDF and two density evaluations per segment, scaled by the moment size
        let scale = sigma * sigma + alpha * alpha + 2.0 * sigma * alpha.abs();
        cdf_slack += k2 * 4.0 * CDF_PRECISION * scale + 2.0 * CDF_PRECISION * s + masses[i] * s_slack;
        max_level = max_level.max(alpha.abs());
        max_residual = max_residual.max(s);
    }
    let clip_bound = match q.method {
        CostMethod::ClosedForm => 0.0,
        CostMethod::Quadrature => {
            let beyond = CLIP_STD * sigma;
            let tail_moment = gaussian_second_moment(beyond, f64::INFINITY, -max_level, sigma);
            2.0 * (k2 * tail_moment + max_residual * gaussian_mass(beyond, f64::INFINITY, sigma))
        }
    };
    let j1 = k2 * j1_sum;
    Ok(CostReport {
        j1,
        j2,
        total: j1 + j2,
        error_bound: quad_bound + cdf_slack + clip_bound,
        quadrature_bound: quad_bound,
        cdf_slack,
        clip_bound,
        segments: t.segment_count(),
    })
}
