use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use witsen_core::optimizer::{run_relaxation_with, IterationState, ProblemParams, RelaxationOutcome};
use witsen_core::{count_macro_steps, step_label, total_cost, CostReport, InnerPolicyThresholds, OuterPolicy};

use crate::config::{ReportFormat, RunConfig};
use crate::error::CliError;
use crate::files;

pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const OUTER_FILE: &str = "outer.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const PLOT_FILE: &str = "gamma1_plot.csv";
pub const DUMP_FILE: &str = "divergence_state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub k: f64,
    #[serde(rename = "L")]
    pub grid_len: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_sample_cost: f64,
    /// Exact cost at the end of each grid level reached at the target k.
    pub exact: Option<CostReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: RunConfig,
    pub stages: Vec<StageSummary>,
    pub cost: CostReport,
    /// Segment count of the final staircase.
    #[serde(rename = "M")]
    pub segments: usize,
    pub macro_steps: usize,
    /// Plateaus per half-line (`macro_steps / 2`).
    pub step_label: f64,
    pub sample_cost: f64,
    pub sample_cost_std: f64,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn summary(&self) -> String {
        format!(
            "L={} M={} steps={} J1={:.8} J2={:.8} J={:.8} (error bound {:.1e}, sample J={:.8})",
            self.config.l_schedule.last().copied().unwrap_or_default(),
            self.segments,
            self.step_label,
            self.cost.j1,
            self.cost.j2,
            self.cost.total,
            self.cost.error_bound,
            self.sample_cost,
        )
    }
}

pub fn report_path(config: &RunConfig) -> PathBuf {
    config.out.join(format!("report.{}", config.format.extension()))
}

fn serialize_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report is serializable") + "\n",
        ReportFormat::Toml => toml::to_string(report).expect("report is serializable"),
    }
}

fn write_report(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn dump_state(dir: &Path, error: &witsen_core::Error, state: &IterationState) -> Result<(), CliError> {
    let dump = serde_json::json!({
        "error": error.to_string(),
        "L": state.grid.len(),
        "delta": state.grid.delta(),
        "sample_cost": state.cost,
        "level_counts": state.counts,
        "gamma2": state.outer.values(),
    });
    let path = dir.join(DUMP_FILE);
    fs::write(&path, serde_json::to_string_pretty(&dump).expect("serializable")).map_err(|e| CliError::io(&path, e))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the optimizer without touching the filesystem.
pub fn optimize(
    config: &RunConfig,
    mut on_stage: impl FnMut(&witsen_core::StageRecord) + Send,
) -> Result<(RelaxationOutcome, f64), CliError> {
    config.validate()?;
    let opt = config.optimizer();
    let start = Instant::now();
    let outcome = with_threads(config.threads, || run_relaxation_with(config.sigma, &opt, &mut on_stage))?;
    let elapsed = start.elapsed().as_secs_f64();
    match outcome {
        Ok(outcome) => Ok((outcome, elapsed)),
        Err(failure) => {
            if let Some(state) = &failure.state {
                // best effort; the numerical error is what gets reported
                let _ = fs::create_dir_all(&config.out).and_then(|_| {
                    dump_state(&config.out, &failure.error, state).map_err(|e| std::io::Error::other(e.to_string()))
                });
            }
            Err(failure.error.into())
        }
    }
}

pub fn build_report(config: &RunConfig, outcome: &RelaxationOutcome, wall_time_seconds: f64) -> Result<RunReport, CliError> {
    let stats = outcome.state.cost_stats(config.k_target())?;
    Ok(RunReport {
        seed: config.seed,
        config: config.clone(),
        stages: outcome
            .stages
            .iter()
            .map(|s| StageSummary {
                k: s.k,
                grid_len: s.grid_len,
                iterations: s.iterations,
                converged: s.converged,
                final_sample_cost: s.final_cost,
                exact: s.exact.clone(),
            })
            .collect(),
        cost: outcome.report.clone(),
        segments: outcome.thresholds.segment_count(),
        macro_steps: count_macro_steps(&outcome.thresholds, config.jump_threshold),
        step_label: step_label(&outcome.thresholds, config.jump_threshold),
        sample_cost: stats.mean,
        sample_cost_std: stats.std_dev,
        wall_time_seconds,
    })
}

/// Full batch run: optimize, then write the policy files, trace, plot data and report.
///
/// The report is written last, so a failed run never leaves one behind.
pub fn run(config: &RunConfig, verbose: bool) -> Result<RunReport, CliError> {
    config.validate()?;
    fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    let (outcome, elapsed) = optimize(config, |s| {
        if verbose {
            let exact = s.exact.as_ref().map(|e| format!(" exact J={:.8}", e.total)).unwrap_or_default();
            eprintln!(
                "k={} L={} iterations={}{} sample J={:.8}{}",
                s.k,
                s.grid_len,
                s.iterations,
                if s.converged { "" } else { " (not converged)" },
                s.final_cost,
                exact
            );
        }
    })?;
    let report = build_report(config, &outcome, elapsed)?;
    let out = &config.out;
    files::write_thresholds(&out.join(THRESHOLDS_FILE), &outcome.thresholds)?;
    files::write_outer(&out.join(OUTER_FILE), &outcome.state.outer)?;
    files::write_trace(&out.join(TRACE_FILE), &outcome.stages)?;
    files::write_plot(&out.join(PLOT_FILE), &outcome.thresholds, config.sigma)?;
    write_report(&report_path(config), &serialize_report(&report, config.format))?;
    Ok(report)
}

/// Reads policy files and evaluates their exact cost.
pub fn load_policies(thresholds: &Path, outer: &Path) -> Result<(InnerPolicyThresholds, OuterPolicy), CliError> {
    let outer = files::read_outer(outer)?;
    let t = files::read_thresholds(thresholds, outer.grid())?;
    Ok((t, outer))
}

pub fn cost_only(config: &RunConfig, thresholds: &Path, outer: &Path) -> Result<CostReport, CliError> {
    let (t, outer) = load_policies(thresholds, outer)?;
    let params = ProblemParams::new(config.k_target(), config.sigma)?;
    Ok(total_cost(&t, &outer, &params, &config.quadrature())?)
}
