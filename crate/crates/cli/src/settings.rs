//! Flags shared by every subcommand, optionally backed by a JSON config file.
//!
//! The config file uses the flag names as keys (`"t-search": 100`). A flag
//! given on the command line wins over the same key in the file.

use std::path::{Path, PathBuf};

use clap::Args;
use priceopt::demand::FitMethod;
use priceopt::sdprelax::SolveOptions;
use priceopt::sim::World;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Sales history CSV (`date, t, p_1.., g_1.., q_1..`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Demand model JSON written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Price candidates: a JSON list (shared by all products), a JSON list of
    /// lists, a path to either, or `split:K` over the historical range.
    #[arg(long)]
    pub grid: Option<String>,
    /// Unit costs: a JSON number or list, or `fraction:F` of the list price.
    #[arg(long)]
    pub costs: Option<String>,
    /// Business constraints JSON file.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// External features per time step: JSON list of lists, or a path to one.
    #[arg(long)]
    pub externals: Option<String>,
    /// Serialized BQP (`problem.json`) for `export`.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// SDP residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub t_search: Option<usize>,
    #[arg(long)]
    pub max_restarts: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// `ols`, `ridge:LAMBDA`, `omp:K`, `ls-omp` or `ls-omp:K_EXTRA`.
    #[arg(long)]
    pub method: Option<String>,
    /// `estimation` or `scalability`.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Product counts, comma separated.
    #[arg(long)]
    pub m: Option<String>,
    /// Samples per trial.
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise level of the estimation study.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seeds per size in the scalability study.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// `dense` or `sparse:DOMINANT:MINOR`.
    #[arg(long)]
    pub world: Option<String>,
    /// Scalability wall-clock budget in seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    /// `lp`, `sdpa` or `both`.
    #[arg(long)]
    pub format: Option<String>,
}

macro_rules! overlay {
    ($flags:ident, $file:ident, $($field:ident),*) => {
        Settings { $($field: $flags.$field.or($file.$field)),* }
    };
}

impl Settings {
    /// Fills every unset flag from the config file.
    pub fn with_config(self, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
        let file: Settings = serde_json::from_str(&text).map_err(|e| CliError::input(path.display(), e))?;
        let flags = self;
        Ok(overlay!(
            flags, file, data, model, grid, costs, constraints, externals, problem, out, seed, tol, t_search,
            max_restarts, threads, method, experiment, m, n, delta, trials, seeds, world, budget, format
        ))
    }

    /// Every path flag that is set must name an existing file.
    pub fn check_paths(&self) -> Result<(), CliError> {
        for (flag, path) in [
            ("--data", &self.data),
            ("--model", &self.model),
            ("--constraints", &self.constraints),
            ("--problem", &self.problem),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::Usage(format!("{flag}: no such file {}", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Usage(format!("{flag} is required")))
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
        Ok(dir)
    }

    pub fn threads(&self) -> Result<usize, CliError> {
        match self.threads.unwrap_or(1) {
            0 => Err(CliError::Usage("--threads must be at least 1".into())),
            t => Ok(t),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn solve_options(&self) -> Result<SolveOptions, CliError> {
        let mut opts = SolveOptions::default();
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(CliError::Usage(format!("--tol must lie in (0, 1), got {tol}")));
            }
            opts.sdp.tol = tol;
        }
        if let Some(t) = self.t_search {
            if t == 0 {
                return Err(CliError::Usage("--t-search must be at least 1".into()));
            }
            opts.t_search = t;
        }
        if let Some(r) = self.max_restarts {
            if r == 0 {
                return Err(CliError::Usage("--max-restarts must be at least 1".into()));
            }
            opts.randomized.max_restarts = r;
        }
        opts.randomized.seed = self.seed();
        Ok(opts)
    }

    pub fn fit_method(&self) -> Result<FitMethod, CliError> {
        parse_method(self.method.as_deref().unwrap_or("ols"))
    }

    pub fn world(&self) -> Result<World, CliError> {
        parse_world(self.world.as_deref().unwrap_or("dense"))
    }

    pub fn sizes(&self, default: &str) -> Result<Vec<usize>, CliError> {
        let raw = self.m.as_deref().unwrap_or(default);
        let sizes = raw
            .split(',')
            .map(|s| s.trim().parse::<usize>().ok().filter(|m| *m > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CliError::Usage(format!("--m: expected positive integers, got `{raw}`")))?;
        Ok(sizes)
    }
}

fn bad_value(flag: &str, raw: &str) -> CliError {
    CliError::Usage(format!("{flag}: cannot parse `{raw}`"))
}

pub fn parse_method(raw: &str) -> Result<FitMethod, CliError> {
    let bad = || bad_value("--method", raw);
    let (name, arg) = match raw.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (raw, None),
    };
    Ok(match (name, arg) {
        ("ols", None) => FitMethod::Ols,
        ("ridge", Some(a)) => FitMethod::Ridge {
            lambda: a.parse().map_err(|_| bad())?,
        },
        ("omp", Some(a)) => FitMethod::Omp {
            k_max: a.parse().map_err(|_| bad())?,
        },
        ("ls-omp", None) => FitMethod::ls_omp_default(),
        ("ls-omp", Some(a)) => FitMethod::LsOmp {
            forced: None,
            k_extra: a.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    })
}

pub fn parse_world(raw: &str) -> Result<World, CliError> {
    if raw == "dense" {
        return Ok(World::Dense);
    }
    let parts: Vec<&str> = raw.split(':').collect();
    match parts.as_slice() {
        ["sparse", d, k] => Ok(World::Sparse {
            dominant: d.parse().map_err(|_| bad_value("--world", raw))?,
            minor: k.parse().map_err(|_| bad_value("--world", raw))?,
        }),
        _ => Err(bad_value("--world", raw)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods() {
        assert_eq!(parse_method("ols").unwrap(), FitMethod::Ols);
        assert_eq!(parse_method("ridge:0.5").unwrap(), FitMethod::Ridge { lambda: 0.5 });
        assert_eq!(parse_method("ls-omp").unwrap(), FitMethod::ls_omp_default());
        assert!(parse_method("lasso").is_err());
        assert!(parse_method("omp:x").is_err());
    }

    #[test]
    fn worlds() {
        assert_eq!(parse_world("sparse:5:10").unwrap(), World::Sparse { dominant: 5, minor: 10 });
        assert!(parse_world("sparse:5").is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 7, "t-search": 50}"#).unwrap();
        let flags = Settings {
            seed: Some(3),
            ..Settings::default()
        };
        let merged = flags.with_config(&path).unwrap();
        assert_eq!(merged.seed, Some(3));
        assert_eq!(merged.t_search, Some(50));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"sead": 7}"#).unwrap();
        assert!(Settings::default().with_config(&path).is_err());
    }
}
