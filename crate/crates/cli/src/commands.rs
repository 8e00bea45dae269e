//! The four subcommands.

use std::path::{Path, PathBuf};

use priceopt::bqp::BqpProblem;
use priceopt::demand::io::{load_dataset, load_model, save_model};
use priceopt::demand::{relative_errors, training_rss, Dataset, DemandModel};
use priceopt::milp::{linearize, write_lp};
use priceopt::profit::{equal_split_grid, load_constraints, PricingInstance};
use priceopt::sdprelax::{lift, solve_bqp, RoundingMethod};
use priceopt::sdpsolver::sdpa::write_sdpa;
use priceopt::sim::{
    run_estimation_study, run_scalability, save_csv, EstimationConfig, EstimationSummary, ScalabilityConfig,
};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::settings::Settings;

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))?;
    Ok(path)
}

fn dataset(path: &Path) -> Result<Dataset, CliError> {
    load_dataset(path).map_err(|e| CliError::input(path.display(), e))
}

#[derive(Serialize)]
struct FitReport {
    method: priceopt::demand::FitMethod,
    samples: usize,
    products: usize,
    horizon: usize,
    /// `||q - q_hat|| / ||q||` per product.
    relative_errors: Vec<f64>,
    mean_relative_error: f64,
    rss: f64,
}

pub fn fit(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let data = dataset(Settings::require(&s.data, "--data")?)?;
    let method = s.fit_method()?;
    let bank = priceopt::demand::FeatureBank::standard(data.external_dim());
    let model = method.fit(&data, &bank).map_err(CliError::Fit)?;
    let errors = relative_errors(&model, &data).map_err(CliError::Fit)?;
    let report = FitReport {
        method,
        samples: data.len(),
        products: data.n_products(),
        horizon: data.horizon(),
        mean_relative_error: errors.iter().sum::<f64>() / errors.len() as f64,
        relative_errors: errors,
        rss: training_rss(&model, &data).map_err(CliError::Fit)?,
    };
    let dir = s.out_dir()?;
    let model_path = dir.join("model.json");
    save_model(&model, &model_path).map_err(|e| CliError::output(&model_path, e))?;
    Ok(vec![model_path, write_json(&dir, "fit_report.json", &report)?])
}

/// Inline JSON, or the contents of the file it names.
fn json_arg(flag: &str, raw: &str) -> Result<Value, CliError> {
    let text = if Path::new(raw).is_file() {
        std::fs::read_to_string(raw).map_err(|e| CliError::input(raw, e))?
    } else {
        raw.to_string()
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn numbers(flag: &str, v: &Value) -> Result<Vec<f64>, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn grid(s: &Settings, m: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let raw = Settings::require(&s.grid, "--grid")?;
    if let Some(k) = raw.strip_prefix("split:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Usage(format!("--grid: bad candidate count in `{raw}`")))?;
        let data = dataset(Settings::require(&s.data, "--data (needed by --grid split:K)")?)?;
        if data.n_products() != m {
            return Err(CliError::Input(format!(
                "dataset has {} products, model has {m}",
                data.n_products()
            )));
        }
        return equal_split_grid(&data.price_range(), k).map_err(|e| CliError::Usage(format!("--grid: {e}")));
    }
    match json_arg("--grid", raw)? {
        Value::Array(rows) if rows.first().is_some_and(Value::is_array) => {
            rows.iter().map(|r| numbers("--grid", r)).collect()
        }
        v => Ok(vec![numbers("--grid", &v)?; m]),
    }
}

fn costs(s: &Settings, grid: &[Vec<f64>]) -> Result<Vec<f64>, CliError> {
    let raw = s.costs.as_deref().unwrap_or("fraction:0.3");
    if let Some(f) = raw.strip_prefix("fraction:") {
        let f: f64 = f
            .parse()
            .map_err(|_| CliError::Usage(format!("--costs: bad fraction in `{raw}`")))?;
        return Ok(grid.iter().map(|cand| f * cand[0]).collect());
    }
    match json_arg("--costs", raw)? {
        Value::Number(c) => Ok(vec![c.as_f64().unwrap_or(f64::NAN); grid.len()]),
        v => numbers("--costs", &v),
    }
}

fn externals(s: &Settings, model: &DemandModel) -> Result<Vec<Vec<f64>>, CliError> {
    match &s.externals {
        Some(raw) => serde_json::from_value(json_arg("--externals", raw)?)
            .map_err(|e| CliError::Usage(format!("--externals: {e}"))),
        None if model.bank.external_dim() == 0 => Ok(vec![Vec::new(); model.horizon]),
        None => Err(CliError::Usage(format!(
            "--externals is required: the model uses {} external features",
            model.bank.external_dim()
        ))),
    }
}

fn pricing(s: &Settings) -> Result<(PricingInstance, BqpProblem), CliError> {
    let path = Settings::require(&s.model, "--model")?;
    let model = load_model(path).map_err(|e| CliError::input(path.display(), e))?;
    let grid = grid(s, model.n_products)?;
    let costs = costs(s, &grid)?;
    let externals = externals(s, &model)?;
    let inst = PricingInstance::new(model, grid, costs, externals).map_err(|e| CliError::Usage(e.to_string()))?;
    let constraints = match &s.constraints {
        Some(p) => load_constraints(p, inst.n_products(), inst.n_candidates())
            .map_err(|e| CliError::input(p.display(), e))?,
        None => Vec::new(),
    };
    let prob = inst
        .build_bqp(&constraints)
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok((inst, prob))
}

/// One row of the price strategy table, list price against optimum.
#[derive(Serialize)]
struct ProductRow {
    product: usize,
    original_price: f64,
    optimal_price: f64,
    original_units: f64,
    optimal_units: f64,
    original_revenue: f64,
    optimal_revenue: f64,
    price_change: f64,
    units_increase: f64,
    revenue_increase: f64,
}

#[derive(Serialize)]
struct OptimizeReport {
    products: Vec<ProductRow>,
    /// Chosen candidate per product, 1-based.
    choices: Vec<usize>,
    z: Vec<u8>,
    /// `f(z)` of the returned point.
    objective: f64,
    /// `g(Y)` of the relaxation.
    upper_bound: f64,
    /// `f/g`; null when `g <= 0`.
    delta: Option<f64>,
    original_profit: f64,
    profit_increase: Option<f64>,
    method: RoundingMethod,
    seed: Option<u64>,
    sdp_iterations: usize,
}

fn rate(new: f64, old: f64) -> f64 {
    if old == 0.0 {
        f64::NAN
    } else {
        (new - old) / old.abs()
    }
}

pub fn optimize(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let (inst, prob) = pricing(s)?;
    let opts = s.solve_options()?;
    let solved = solve_bqp(&prob, &opts).map_err(CliError::Solve)?;
    let z = solved.rounding.z.clone();
    let input = |e: priceopt::profit::ProfitError| CliError::Input(e.to_string());
    let list: Vec<f64> = inst.grid().iter().map(|c| c[0]).collect();
    let chosen = inst.prices_of(&z).map_err(input)?;
    let (units0, units1) = (inst.units(&list).map_err(input)?, inst.units(&chosen).map_err(input)?);
    let products = (0..inst.n_products())
        .map(|m| {
            let (r0, r1) = (list[m] * units0[m], chosen[m] * units1[m]);
            ProductRow {
                product: m + 1,
                original_price: list[m],
                optimal_price: chosen[m],
                original_units: units0[m],
                optimal_units: units1[m],
                original_revenue: r0,
                optimal_revenue: r1,
                price_change: rate(chosen[m], list[m]),
                units_increase: rate(units1[m], units0[m]),
                revenue_increase: rate(r1, r0),
            }
        })
        .collect();
    let original_profit = inst.profit(&list).map_err(input)?;
    let report = OptimizeReport {
        products,
        choices: prob
            .choices_from_point(&z)
            .unwrap_or_default()
            .iter()
            .map(|c| c + 1)
            .collect(),
        objective: solved.rounding.objective,
        upper_bound: solved.rounding.upper,
        delta: solved.rounding.delta,
        profit_increase: (original_profit != 0.0).then(|| rate(solved.rounding.objective, original_profit)),
        original_profit,
        method: solved.rounding.method,
        seed: solved.rounding.seed,
        sdp_iterations: solved.relaxation.iterations,
        z,
    };
    let dir = s.out_dir()?;
    let problem_path = dir.join("problem.json");
    prob.save(&problem_path).map_err(|e| CliError::output(&problem_path, e))?;
    Ok(vec![
        write_json(&dir, "report.json", &report)?,
        problem_path,
        write_json(&dir, "timings.json", &solved.timings)?,
    ])
}

#[derive(Serialize)]
struct SizeSummary {
    m: usize,
    #[serde(flatten)]
    summary: EstimationSummary,
}

pub fn simulate(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let solve = s.solve_options()?;
    let dir = s.out_dir()?;
    let sim_err = |e: priceopt::sim::SimError| match e {
        priceopt::sim::SimError::Rounding(r) => CliError::Solve(r),
        priceopt::sim::SimError::Demand(d) => CliError::Fit(d),
        other => CliError::Usage(other.to_string()),
    };
    match s.experiment.as_deref().unwrap_or("estimation") {
        "scalability" => {
            let count = s.seeds.unwrap_or(3) as u64;
            let cfg = ScalabilityConfig {
                ms: s.sizes("10,20")?,
                seeds: (0..count).map(|i| s.seed() + i).collect(),
                budget_seconds: s.budget,
                solve,
            };
            let (rows, timings) = run_scalability(&cfg).map_err(sim_err)?;
            let (a, b) = (dir.join("scalability.csv"), dir.join("scalability_timings.csv"));
            save_csv(&rows, &a).map_err(|e| CliError::output(&a, e))?;
            save_csv(&timings, &b).map_err(|e| CliError::output(&b, e))?;
            Ok(vec![a, b])
        }
        "estimation" => {
            let mut rows = Vec::new();
            let mut timings = Vec::new();
            let mut summaries = Vec::new();
            for m in s.sizes("10")? {
                let mut cfg = EstimationConfig::new(
                    m,
                    s.n.unwrap_or(1000),
                    s.delta.unwrap_or(0.2),
                    s.trials.unwrap_or(30),
                    s.seed(),
                );
                cfg.method = s.fit_method()?;
                cfg.world = s.world()?;
                cfg.solve = solve;
                let (r, summary, t) = run_estimation_study(&cfg).map_err(sim_err)?;
                rows.extend(r);
                timings.extend(t);
                summaries.push(SizeSummary { m, summary });
            }
            let (a, b) = (dir.join("estimation.csv"), dir.join("estimation_timings.csv"));
            save_csv(&rows, &a).map_err(|e| CliError::output(&a, e))?;
            save_csv(&timings, &b).map_err(|e| CliError::output(&b, e))?;
            Ok(vec![a, write_json(&dir, "estimation_summary.json", &summaries)?, b])
        }
        other => Err(CliError::Usage(format!(
            "--experiment: expected `estimation` or `scalability`, got `{other}`"
        ))),
    }
}

pub fn export(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let prob = match &s.problem {
        Some(p) => BqpProblem::load(p).map_err(|e| CliError::input(p.display(), e))?,
        None => pricing(s)?.1,
    };
    let (lp, sdpa) = match s.format.as_deref().unwrap_or("both") {
        "lp" => (true, false),
        "sdpa" => (false, true),
        "both" => (true, true),
        other => return Err(CliError::Usage(format!("--format: expected lp, sdpa or both, got `{other}`"))),
    };
    let dir = s.out_dir()?;
    let mut written = Vec::new();
    if lp {
        let model = linearize(&prob).map_err(|e| CliError::Input(e.to_string()))?;
        let path = dir.join("problem.lp");
        write_lp(&model, &path).map_err(|e| CliError::output(&path, e))?;
        written.push(path);
    }
    if sdpa {
        let path = dir.join("problem.dat-s");
        write_sdpa(lift(&prob).problem(), &path).map_err(|e| CliError::output(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
