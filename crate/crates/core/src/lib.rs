//! Numerical solver for Witsenhausen-type two-stage team decision problems.
//!
//! The first decision maker observes `X0 ~ N(0, sigma^2)` and chooses
//! `x1 = gamma1(x0) + x0`; the second observes `Y2 = x1 + W`, `W ~ N(0, 1)`,
//! and estimates `x1`. The total cost is `k^2 E[gamma1(X0)^2] + E[(X1 - gamma2(Y2))^2]`.
//!
//! Both policies are restricted to a uniform odd-length grid ([`grid::Grid`]) and
//! optimized by alternating best responses ([`optimizer`]), with the first-stage
//! weight `k` relaxed from a large value down to the target and the grid refined
//! afterwards. The final policies are scored by [`exactcost`], which integrates
//! the staircase form of the first-stage policy against the Gaussian source.

pub mod error;
pub mod exactcost;
pub mod grid;
pub mod normal;
pub mod optimizer;
pub mod policy;

pub use error::{Error, Result};
pub use exactcost::{total_cost, CostMethod, CostReport, QuadratureConfig};
pub use grid::{build_grid, channel_row_banded, channel_row_exact, BandRow, ChannelModel, Grid};
pub use optimizer::{
    run_relaxation, run_relaxation_with, IterationState, OptimizerConfig, ProblemParams,
    RelaxationOutcome, StageRecord,
};
pub use policy::{
    count_macro_steps, evaluate_inner, extract_thresholds, step_label, InnerPolicySamples, InnerPolicyThresholds, OuterPolicy,
};
