//! Scalability and estimation-influence experiments.
//!
//! Result rows hold only seed-determined values so their CSV output is
//! byte-stable; wall-clock timings are kept apart in [`TrialTiming`] rows.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, generate_sparse, instance_for, sample_dataset, GroundTruth, SimError};
use crate::bqp::brute_force;
use crate::demand::{FeatureBank, FitMethod};
use crate::rng::child_seed;
use crate::sdprelax::{solve_bqp, SolveOptions};

/// Largest `M` for which the scalability table includes the brute-force optimum.
pub const BRUTE_FORCE_MAX_M: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityConfig {
    pub ms: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Stop starting new sizes once this many seconds have elapsed.
    #[serde(default)]
    pub budget_seconds: Option<f64>,
    #[serde(default)]
    pub solve: SolveOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityRow {
    pub m: usize,
    pub seed: u64,
    pub iterations: usize,
    /// `f*(z~)` for the rounded point.
    pub f_rounded: f64,
    /// `g(Y~)`.
    pub upper: f64,
    pub delta: Option<f64>,
    /// Exact optimum when `M <= BRUTE_FORCE_MAX_M`.
    pub f_optimal: Option<f64>,
}

/// Wall-clock seconds of one run, keyed by size and seed or trial index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub m: usize,
    pub index: u64,
    pub fit: f64,
    pub lift: f64,
    pub sdp: f64,
    pub rounding: f64,
}

/// Solves the noiseless world of every `(M, seed)` pair, sizes in order.
pub fn run_scalability(cfg: &ScalabilityConfig) -> Result<(Vec<ScalabilityRow>, Vec<TrialTiming>), SimError> {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &m in &cfg.ms {
        if cfg.budget_seconds.is_some_and(|b| start.elapsed().as_secs_f64() > b) {
            break;
        }
        for &seed in &cfg.seeds {
            let prob = generate(m, seed, 0.0).instance().build_bqp(&[])?;
            let solved = solve_bqp(&prob, &cfg.solve)?;
            let f_optimal = if m <= BRUTE_FORCE_MAX_M {
                Some(brute_force(&prob).map_err(crate::profit::ProfitError::from)?.objective)
            } else {
                None
            };
            rows.push(ScalabilityRow {
                m,
                seed,
                iterations: solved.relaxation.iterations,
                f_rounded: solved.rounding.objective,
                upper: solved.rounding.upper,
                delta: solved.rounding.delta,
                f_optimal,
            });
            timings.push(TrialTiming {
                m,
                index: seed,
                fit: 0.0,
                lift: solved.timings.lift,
                sdp: solved.timings.sdp,
                rounding: solved.timings.rounding,
            });
        }
    }
    Ok((rows, timings))
}

/// How the ground truth of each trial is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum World {
    /// [`generate`].
    Dense,
    /// [`generate_sparse`].
    Sparse { dominant: usize, minor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub m: usize,
    /// Samples per trial.
    pub n: usize,
    /// Target noise level `sqrt(sigma^2 / E[q^2])`.
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub method: FitMethod,
    pub world: World,
    #[serde(default)]
    pub solve: SolveOptions,
}

impl EstimationConfig {
    /// Dense world, ordinary least squares.
    pub fn new(m: usize, n: usize, delta: f64, trials: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            delta,
            trials,
            seed,
            method: FitMethod::Ols,
            world: World::Dense,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub m: usize,
    pub n: usize,
    pub delta: f64,
    pub trial: usize,
    /// Seed of this trial; the world and the sample derive from it.
    pub seed: u64,
    pub sigma: f64,
    /// `f*(z*)`.
    pub true_at_true: f64,
    /// `f*(z^)`.
    pub true_at_fitted: f64,
    /// `f^(z^)`.
    pub fitted_at_fitted: f64,
    /// `f*(z^) / f*(z*)`.
    pub ratio_true: f64,
    /// `f^(z^) / f*(z*)`.
    pub ratio_fitted: f64,
    /// `g(Y)` of the true relaxation; `f*(z^)` cannot exceed it.
    pub true_upper: f64,
    pub z_true: String,
    pub z_fitted: String,
}

impl TrialReport {
    /// The ground truth this trial used.
    pub fn world(&self, cfg: &EstimationConfig) -> GroundTruth {
        trial_world(cfg, self.seed)
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }

    pub fn std_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub trials: usize,
    pub true_at_true: Stat,
    pub true_at_fitted: Stat,
    pub fitted_at_fitted: Stat,
    pub ratio_true: Stat,
    pub ratio_fitted: Stat,
    /// `f^(z^) - f*(z^)`.
    pub overestimate: Stat,
}

pub fn summarize(reports: &[TrialReport]) -> EstimationSummary {
    let col = |f: fn(&TrialReport) -> f64| Stat::of(&reports.iter().map(f).collect::<Vec<_>>());
    EstimationSummary {
        trials: reports.len(),
        true_at_true: col(|r| r.true_at_true),
        true_at_fitted: col(|r| r.true_at_fitted),
        fitted_at_fitted: col(|r| r.fitted_at_fitted),
        ratio_true: col(|r| r.ratio_true),
        ratio_fitted: col(|r| r.ratio_fitted),
        overestimate: col(|r| r.fitted_at_fitted - r.true_at_fitted),
    }
}

fn trial_world(cfg: &EstimationConfig, seed: u64) -> GroundTruth {
    let world_seed = child_seed(seed, 0);
    let gt = match cfg.world {
        World::Dense => generate(cfg.m, world_seed, 0.0),
        World::Sparse { dominant, minor } => generate_sparse(cfg.m, dominant, minor, world_seed, 0.0),
    };
    gt.with_noise_level(cfg.delta)
}

fn bits(z: &[u8]) -> String {
    z.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn run_trial(cfg: &EstimationConfig, trial: usize) -> Result<(TrialReport, TrialTiming), SimError> {
    let seed = child_seed(cfg.seed, trial as u64);
    let gt = trial_world(cfg, seed);
    let data = sample_dataset(&gt, cfg.n, child_seed(seed, 1));

    let t0 = Instant::now();
    let fitted = cfg.method.fit(&data, &FeatureBank::standard(0))?;
    let fit_secs = t0.elapsed().as_secs_f64();

    let true_prob = gt.instance().build_bqp(&[])?;
    let fitted_prob = instance_for(fitted).build_bqp(&[])?;
    let star = solve_bqp(&true_prob, &cfg.solve)?;
    let hat = solve_bqp(&fitted_prob, &cfg.solve)?;

    let z_star = &star.rounding.z;
    let z_hat = &hat.rounding.z;
    let true_at_true = star.rounding.objective;
    let true_at_fitted = true_prob.objective(z_hat).map_err(crate::profit::ProfitError::from)?;
    let fitted_at_fitted = hat.rounding.objective;
    let report = TrialReport {
        m: cfg.m,
        n: cfg.n,
        delta: cfg.delta,
        trial,
        seed,
        sigma: gt.sigma,
        true_at_true,
        true_at_fitted,
        fitted_at_fitted,
        ratio_true: true_at_fitted / true_at_true,
        ratio_fitted: fitted_at_fitted / true_at_true,
        true_upper: star.relaxation.value,
        z_true: bits(z_star),
        z_fitted: bits(z_hat),
    };
    let timing = TrialTiming {
        m: cfg.m,
        index: trial as u64,
        fit: fit_secs,
        lift: star.timings.lift + hat.timings.lift,
        sdp: star.timings.sdp + hat.timings.sdp,
        rounding: star.timings.rounding + hat.timings.rounding,
    };
    Ok((report, timing))
}

/// Runs the trials in parallel on the current rayon pool. Results come back
/// in trial order whatever the scheduling.
pub fn run_estimation_study(
    cfg: &EstimationConfig,
) -> Result<(Vec<TrialReport>, EstimationSummary, Vec<TrialTiming>), SimError> {
    if cfg.trials < 2 {
        return Err(SimError::InvalidConfig("at least two trials are needed".into()));
    }
    if !(0.0..1.0).contains(&cfg.delta) {
        return Err(SimError::InvalidConfig("delta must lie in [0, 1)".into()));
    }
    let results: Vec<(TrialReport, TrialTiming)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<_, _>>()?;
    let (reports, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = summarize(&reports);
    Ok((reports, summary, timings))
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}
