use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use witsen_core::optimizer::{
    linear_k_schedule, DEFAULT_BAND_STD, DEFAULT_K_SCHEDULE, DEFAULT_L_SCHEDULE, DEFAULT_MAX_INNER_ITERATIONS,
    DEFAULT_SAMPLES, DEFAULT_STOP_THRESHOLD,
};
use witsen_core::{CostMethod, OptimizerConfig, QuadratureConfig};

use crate::error::CliError;

pub const DEFAULT_SIGMA: f64 = 5.0;
pub const DEFAULT_JUMP_THRESHOLD: f64 = 1.0;
pub const DEFAULT_QUAD_TOL: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Toml,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Toml => "toml",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QuadMethod {
    ClosedForm,
    Quadrature,
}

impl From<QuadMethod> for CostMethod {
    fn from(m: QuadMethod) -> Self {
        match m {
            QuadMethod::ClosedForm => CostMethod::ClosedForm,
            QuadMethod::Quadrature => CostMethod::Quadrature,
        }
    }
}

/// Optimize Witsenhausen-type team decision problems by alternating best
/// responses on a discretized policy space.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "witsen", version)]
pub struct Args {
    /// TOML file with any of the run settings; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Standard deviation of the initial state X0.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Target first-stage weight k_T.
    #[arg(long = "k-target")]
    pub k_target: Option<f64>,
    /// Relaxation schedule for k, strictly decreasing, comma separated.
    #[arg(long = "k-schedule", value_delimiter = ',', num_args = 1..)]
    pub k_schedule: Option<Vec<f64>>,
    /// Start of a linear k path down to the target (replaces --k-schedule).
    #[arg(long = "k-linear-start")]
    pub k_linear_start: Option<f64>,
    /// Number of decrements on the linear k path.
    #[arg(long = "k-linear-steps")]
    pub k_linear_steps: Option<usize>,
    /// Grid sizes, odd and strictly increasing, comma separated.
    #[arg(long = "L-schedule", value_delimiter = ',', num_args = 1..)]
    pub l_schedule: Option<Vec<usize>>,
    /// Number of positive-half Monte-Carlo samples.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative-improvement stop threshold for the inner loop.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Channel band half-width in noise standard deviations.
    #[arg(long)]
    pub band: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Absolute tolerance charged to each cost integral.
    #[arg(long = "quad-tol")]
    pub quad_tol: Option<f64>,
    #[arg(long = "quad-method", value_enum)]
    pub quad_method: Option<QuadMethod>,
    /// Level gap that separates two macro-steps.
    #[arg(long = "jump-threshold")]
    pub jump_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate the exact cost of existing policy files and exit.
    #[arg(long = "cost-only", num_args = 2, value_names = ["THRESHOLDS_CSV", "OUTER_CSV"])]
    pub cost_only: Option<Vec<PathBuf>>,
}

/// Settings accepted from a TOML config file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct FileConfig {
    pub sigma: Option<f64>,
    pub k_target: Option<f64>,
    pub k_schedule: Option<Vec<f64>>,
    pub k_linear_start: Option<f64>,
    pub k_linear_steps: Option<usize>,
    #[serde(alias = "L_schedule")]
    pub l_schedule: Option<Vec<usize>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub band: Option<f64>,
    pub max_iter: Option<usize>,
    pub quad_tol: Option<f64>,
    pub quad_method: Option<QuadMethod>,
    pub jump_threshold: Option<f64>,
    pub format: Option<ReportFormat>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sigma: f64,
    pub k_schedule: Vec<f64>,
    #[serde(rename = "L_schedule")]
    pub l_schedule: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub delta: f64,
    pub band: f64,
    pub max_iter: usize,
    pub quad_tol: f64,
    pub quad_method: QuadMethod,
    pub jump_threshold: f64,
    pub format: ReportFormat,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sigma: DEFAULT_SIGMA,
            k_schedule: DEFAULT_K_SCHEDULE.to_vec(),
            l_schedule: DEFAULT_L_SCHEDULE.to_vec(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            delta: DEFAULT_STOP_THRESHOLD,
            band: DEFAULT_BAND_STD,
            max_iter: DEFAULT_MAX_INNER_ITERATIONS,
            quad_tol: DEFAULT_QUAD_TOL,
            quad_method: QuadMethod::ClosedForm,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
            format: ReportFormat::Json,
            threads: None,
            out: PathBuf::from("witsen-out"),
        }
    }
}

impl RunConfig {
    pub fn k_target(&self) -> f64 {
        *self.k_schedule.last().expect("validated schedule")
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            k_schedule: self.k_schedule.clone(),
            l_schedule: self.l_schedule.clone(),
            n_samples: self.samples,
            seed: self.seed,
            stop_threshold: self.delta,
            band_std: self.band,
            max_inner_iterations: self.max_iter,
            quadrature: self.quadrature(),
        }
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig {
            tol: self.quad_tol,
            method: self.quad_method.into(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("sigma", self.sigma)?;
        if self.k_schedule.is_empty() {
            return Err(CliError::config("k_schedule", "must not be empty"));
        }
        for &k in &self.k_schedule {
            positive("k_schedule", k)?;
        }
        if self.k_schedule.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(CliError::config("k_schedule", "must be strictly decreasing"));
        }
        if self.l_schedule.is_empty() {
            return Err(CliError::config("L_schedule", "must not be empty"));
        }
        if let Some(l) = self.l_schedule.iter().find(|&&l| l % 2 == 0) {
            return Err(CliError::config("L_schedule", format!("grid sizes must be odd, got {l}")));
        }
        if let Some(l) = self.l_schedule.iter().find(|&&l| l < 3) {
            return Err(CliError::config("L_schedule", format!("grid sizes must be at least 3, got {l}")));
        }
        if self.l_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("L_schedule", "must be strictly increasing"));
        }
        if self.samples == 0 {
            return Err(CliError::config("samples", "must be positive"));
        }
        positive("delta", self.delta)?;
        positive("band", self.band)?;
        if self.max_iter == 0 {
            return Err(CliError::config("max_iter", "must be positive"));
        }
        positive("quad_tol", self.quad_tol)?;
        positive("jump_threshold", self.jump_threshold)?;
        if self.threads == Some(0) {
            return Err(CliError::config("threads", "must be positive"));
        }
        Ok(())
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), CliError> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be positive, got {v}")))
    }
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))
}

/// Merges defaults, an optional config file, and flags (highest precedence).
pub fn parse_config(args: &Args) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let pick = |flag: Option<f64>, file: Option<f64>| flag.or(file);
    let mut cfg = RunConfig::default();

    if let Some(v) = pick(args.sigma, file.sigma) {
        cfg.sigma = v;
    }
    let k_target = pick(args.k_target, file.k_target);
    let linear_start = pick(args.k_linear_start, file.k_linear_start);
    let linear_steps = args.k_linear_steps.or(file.k_linear_steps);
    // flag-level schedule beats a file-level one of either kind
    let explicit = args.k_schedule.clone().or_else(|| {
        if args.k_linear_start.is_some() {
            None
        } else {
            file.k_schedule.clone()
        }
    });
    cfg.k_schedule = match (explicit, linear_start) {
        (Some(schedule), _) => {
            if let Some(target) = k_target {
                if schedule.last() != Some(&target) {
                    return Err(CliError::config(
                        "k_target",
                        format!("{target} does not match the last k-schedule entry {:?}", schedule.last()),
                    ));
                }
            }
            schedule
        }
        (None, Some(start)) => {
            let target = k_target.unwrap_or(*DEFAULT_K_SCHEDULE.last().expect("non-empty"));
            if !(start > target) {
                return Err(CliError::config("k_linear_start", format!("{start} must exceed the target {target}")));
            }
            linear_k_schedule(start, target, linear_steps.unwrap_or(10))
        }
        (None, None) => match k_target {
            Some(target) => DEFAULT_K_SCHEDULE
                .iter()
                .copied()
                .filter(|&k| k > target)
                .chain(std::iter::once(target))
                .collect(),
            None => DEFAULT_K_SCHEDULE.to_vec(),
        },
    };
    if let Some(v) = args.l_schedule.clone().or(file.l_schedule) {
        cfg.l_schedule = v;
    }
    if let Some(v) = args.samples.or(file.samples) {
        cfg.samples = v;
    }
    if let Some(v) = args.seed.or(file.seed) {
        cfg.seed = v;
    }
    if let Some(v) = pick(args.delta, file.delta) {
        cfg.delta = v;
    }
    if let Some(v) = pick(args.band, file.band) {
        cfg.band = v;
    }
    if let Some(v) = args.max_iter.or(file.max_iter) {
        cfg.max_iter = v;
    }
    if let Some(v) = pick(args.quad_tol, file.quad_tol) {
        cfg.quad_tol = v;
    }
    if let Some(v) = args.quad_method.or(file.quad_method) {
        cfg.quad_method = v;
    }
    if let Some(v) = pick(args.jump_threshold, file.jump_threshold) {
        cfg.jump_threshold = v;
    }
    if let Some(v) = args.format.or(file.format) {
        cfg.format = v;
    }
    cfg.threads = args.threads.or(file.threads);
    if let Some(v) = args.out.clone().or(file.out) {
        cfg.out = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(argv: &[&str]) -> Result<RunConfig, CliError> {
        let args = Args::try_parse_from(std::iter::once("witsen").chain(argv.iter().copied())).unwrap();
        parse_config(&args)
    }

    #[test]
    fn no_arguments_gives_defaults() {
        let cfg = parse(&[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sigma, 5.0);
        assert_eq!(cfg.k_target(), 0.2);
        assert_eq!(cfg.k_schedule, vec![3.0, 2.0, 1.5, 1.0, 0.6, 0.4, 0.3, 0.2]);
        assert_eq!(cfg.l_schedule, vec![201, 401, 801, 1601, 3201, 6401, 12801]);
        assert_eq!(cfg.samples, 400_000);
        assert_eq!(cfg.delta, 1e-7);
    }

    #[test]
    fn single_grid_run() {
        let cfg = parse(&["--L-schedule", "201"]).unwrap();
        assert_eq!(cfg.l_schedule, vec![201]);
        assert_eq!(cfg.k_schedule, DEFAULT_K_SCHEDULE.to_vec());
    }

    #[test]
    fn rejects_named_fields() {
        let field = |argv: &[&str]| match parse(argv) {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(field(&["--L-schedule", "200"]), "L_schedule");
        assert_eq!(field(&["--L-schedule", "401,201"]), "L_schedule");
        assert_eq!(field(&["--k-schedule", "1,2"]), "k_schedule");
        assert_eq!(field(&["--k-schedule", "1,1"]), "k_schedule");
        assert_eq!(field(&["--delta", "0"]), "delta");
        assert_eq!(field(&["--delta=-1e-3"]), "delta");
        assert_eq!(field(&["--k-schedule", "3,1", "--k-target", "0.2"]), "k_target");
    }

    #[test]
    fn k_target_trims_default_schedule() {
        let cfg = parse(&["--k-target", "0.5"]).unwrap();
        assert_eq!(cfg.k_schedule, vec![3.0, 2.0, 1.5, 1.0, 0.6, 0.5]);
        let cfg = parse(&["--k-schedule", "3"]).unwrap();
        assert_eq!(cfg.k_schedule, vec![3.0]);
    }

    #[test]
    fn linear_path() {
        let cfg = parse(&["--k-linear-start", "3", "--k-linear-steps", "4"]).unwrap();
        assert_eq!(cfg.k_schedule.len(), 5);
        assert_eq!(cfg.k_target(), 0.2);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "samples = 1234\nseed = 9\nL_schedule = [101, 201]\nsigma = 4.0\n").unwrap();
        let cfg = parse(&["--config", path.to_str().unwrap(), "--seed", "11"]).unwrap();
        assert_eq!(cfg.samples, 1234);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.l_schedule, vec![101, 201]);
        assert_eq!(cfg.sigma, 4.0);

        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(matches!(
            parse(&["--config", path.to_str().unwrap()]),
            Err(CliError::Config { field: "config", .. })
        ));
    }
}
