//! Synthetic pricing worlds for the simulation studies.
//!
//! The ground truth is a single-period demand model over the standard bank
//! `{x, x^2, 1/x}` with no external features:
//!
//! ```text
//! q_m = alpha_m + sum_{m', d} beta_{m m' d} f_d(p_m') + eps,   eps ~ N(0, sigma^2)
//! ```
//!
//! Prices live on the fixed grid `{1.0, 0.95, 0.9, 0.85, 0.8}` and every unit
//! costs 0.7. Because the noise is additive with zero mean, the expected profit
//! `f*(z)` is the noiseless profit, computed exactly through the BQP.

mod experiments;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::demand::{Dataset, DemandModel, FeatureBank, Sample};
use crate::profit::PricingInstance;
use crate::rng::seeded;

pub use experiments::{
    run_estimation_study, run_scalability, save_csv, summarize, write_csv, EstimationConfig, EstimationSummary,
    ScalabilityConfig, ScalabilityRow, Stat, TrialReport, TrialTiming, World, BRUTE_FORCE_MAX_M,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Demand(#[from] crate::demand::DemandError),
    #[error(transparent)]
    Profit(#[from] crate::profit::ProfitError),
    #[error(transparent)]
    Rounding(#[from] crate::sdprelax::RoundingError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Candidate prices, list price first.
pub const GRID: [f64; 5] = [1.0, 0.95, 0.9, 0.85, 0.8];
/// Unit cost of every product.
pub const UNIT_COST: f64 = 0.7;

/// True demand model plus noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: DemandModel,
    /// Standard deviation of the additive noise, in units.
    pub sigma: f64,
}

impl GroundTruth {
    pub fn n_products(&self) -> usize {
        self.model.n_products
    }

    /// Pricing instance over the fixed grid with the true coefficients.
    pub fn instance(&self) -> PricingInstance {
        instance_for(self.model.clone())
    }

    /// Noiseless quantities at `prices`.
    pub fn mean_quantities(&self, prices: &[f64]) -> Vec<f64> {
        self.model.predict(prices, &[], 1).expect("grid prices are positive")
    }

    /// `E[q_bar_m^2]` averaged over products, for prices drawn independently
    /// and uniformly from the grid. Exact: the price terms of different
    /// products are independent, so mean and variance add up per product.
    pub fn mean_square_signal(&self) -> f64 {
        let m = self.n_products();
        let bank = &self.model.bank;
        let feats: Vec<Vec<f64>> = GRID
            .iter()
            .map(|&p| bank.transforms().iter().map(|f| f.apply(p)).collect())
            .collect();
        let d = bank.price_dim();
        let k = GRID.len() as f64;
        let mut total = 0.0;
        for i in 0..m {
            let mut mean = self.model.alpha[0][i];
            let mut var = 0.0;
            for j in 0..m {
                let coefs = &self.model.beta[0][i][j * d..(j + 1) * d];
                let h: Vec<f64> = feats
                    .iter()
                    .map(|f| coefs.iter().zip(f).map(|(b, x)| b * x).sum())
                    .collect();
                let mu = h.iter().sum::<f64>() / k;
                mean += mu;
                var += h.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / k;
            }
            total += mean * mean + var;
        }
        total / m as f64
    }

    /// Monte-Carlo counterpart of [`Self::mean_square_signal`].
    pub fn mean_square_signal_mc(&self, draws: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let m = self.n_products();
        let mut acc = 0.0;
        for _ in 0..draws {
            let p: Vec<f64> = (0..m).map(|_| GRID[rng.random_range(0..GRID.len())]).collect();
            acc += self.mean_quantities(&p).iter().map(|q| q * q).sum::<f64>();
        }
        acc / (draws * m) as f64
    }

    /// Same world with the noise level set so that `sqrt(sigma^2 / E[q^2])`
    /// equals `delta`.
    pub fn with_noise_level(mut self, delta: f64) -> Self {
        self.sigma = calibrate_sigma(delta, self.mean_square_signal());
        self
    }
}

pub(crate) fn instance_for(model: DemandModel) -> PricingInstance {
    let m = model.n_products;
    PricingInstance::new(model, vec![GRID.to_vec(); m], vec![UNIT_COST; m], vec![vec![]])
        .expect("grid and costs are valid")
}

/// Draws `alpha* ~ N(4M, 1)`, `beta*_{m m' d} ~ N(-1, 1)` when `m = m'` and
/// `N(0, 1)` otherwise.
pub fn generate(m: usize, seed: u64, sigma: f64) -> GroundTruth {
    assert!(m >= 1, "at least one product");
    let mut rng = seeded(seed);
    let bank = FeatureBank::standard(0);
    let d = bank.price_dim();
    let mut model = DemandModel::zeros(bank, m, 1);
    let alpha = Normal::new(4.0 * m as f64, 1.0).unwrap();
    for i in 0..m {
        model.alpha[0][i] = alpha.sample(&mut rng);
        for j in 0..m {
            let shift = if i == j { -1.0 } else { 0.0 };
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                model.beta[0][i][j * d + k] = shift + z;
            }
        }
    }
    GroundTruth { model, sigma }
}

/// World where a few dominant products drive everything: the first
/// `dominant` products have large baselines and their prices move every
/// product's demand, each product reacts to its own price, and `minor`
/// random additional cross effects exist. All other coefficients are zero.
pub fn generate_sparse(m: usize, dominant: usize, minor: usize, seed: u64, sigma: f64) -> GroundTruth {
    assert!(dominant <= m, "dominant products must exist");
    let mut rng = seeded(seed);
    let bank = FeatureBank::standard(0);
    let d = bank.price_dim();
    let mut model = DemandModel::zeros(bank, m, 1);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    for i in 0..m {
        let base = if i < dominant { 8.0 * m as f64 } else { 2.0 * m as f64 };
        model.alpha[0][i] = base + normal(&mut rng);
        for j in 0..m {
            if i == j || j < dominant {
                let shift = if i == j { -1.0 } else { 0.0 };
                for k in 0..d {
                    model.beta[0][i][j * d + k] = shift + normal(&mut rng);
                }
            }
        }
    }
    let mut placed = 0;
    while placed < minor && m > dominant + 1 {
        let i = rng.random_range(0..m);
        let j = rng.random_range(dominant..m);
        let k = rng.random_range(0..d);
        let slot = &mut model.beta[0][i][j * d + k];
        if i != j && *slot == 0.0 {
            *slot = 0.5 * normal(&mut rng);
            placed += 1;
        }
    }
    for (b, k) in model.beta[0].iter().zip(model.mask[0].iter_mut()) {
        for (v, on) in b.iter().zip(k.iter_mut()) {
            *on = *v != 0.0;
        }
    }
    GroundTruth { model, sigma }
}

/// `n` samples with prices drawn uniformly from the grid and noisy demand.
pub fn sample_dataset(gt: &GroundTruth, n: usize, seed: u64) -> Dataset {
    assert!(n >= 1, "at least one sample");
    let mut rng = seeded(seed);
    let m = gt.n_products();
    let samples = (0..n)
        .map(|_| {
            let prices: Vec<f64> = (0..m).map(|_| GRID[rng.random_range(0..GRID.len())]).collect();
            let quantities = gt
                .mean_quantities(&prices)
                .into_iter()
                .map(|q| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    q + gt.sigma * e
                })
                .collect();
            Sample {
                date: None,
                t: None,
                prices,
                externals: vec![],
                quantities,
            }
        })
        .collect();
    Dataset::new(samples).expect("generated samples are valid")
}

/// `delta = sqrt(sigma^2 / E[q^2])`.
pub fn noise_level(sigma: f64, mean_square_q: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    (sigma * sigma / mean_square_q).sqrt()
}

/// Inverse of [`noise_level`] given the noiseless `E[q_bar^2]`, using
/// `E[q^2] = E[q_bar^2] + sigma^2`.
pub fn calibrate_sigma(delta: f64, mean_square_signal: f64) -> f64 {
    assert!((0.0..1.0).contains(&delta), "delta must lie in [0, 1)");
    (delta * delta * mean_square_signal / (1.0 - delta * delta)).sqrt()
}

/// Sample mean of `q^2` over all products and rows.
pub fn empirical_mean_square(data: &Dataset) -> f64 {
    let total: f64 = data
        .samples()
        .iter()
        .flat_map(|s| s.quantities.iter())
        .map(|q| q * q)
        .sum();
    total / (data.len() * data.n_products()) as f64
}
