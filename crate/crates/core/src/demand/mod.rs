//! Per-product sales regressions.
//!
//! Demand for product `m` at time step `t` is modelled as
//!
//! ```text
//! q_m(p, g) = alpha_m + sum_{m', d} beta_{m m' d} f_d(p_{m'}) + sum_d gamma_{m d} g_d
//! ```
//!
//! where `f_d` are univariate price transforms from a [`FeatureBank`] and `g`
//! are external features (weather, calendar, ...). Models are fitted by least
//! squares, ridge, orthogonal matching pursuit, or the two-stage LS-OMP
//! procedure in [`fit`].

mod design;
pub mod fit;
pub mod io;

pub use design::{design_matrix, design_row};
pub use fit::{fit_ls_omp, fit_ols, fit_omp, fit_ridge, relative_errors, top_revenue_products, training_rss, FitMethod};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("non-positive price {value} for product {product} (row {row})")]
    NonPositivePrice { row: usize, product: usize, value: f64 },
    #[error("design matrix is numerically singular (condition estimate {condition:.3e})")]
    SingularDesign { condition: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed data: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Univariate price transform `f_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transform {
    #[serde(rename = "x")]
    Linear,
    #[serde(rename = "x^2")]
    Square,
    #[serde(rename = "1/x")]
    Reciprocal,
    #[serde(rename = "log")]
    Log,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Linear => x,
            Transform::Square => x * x,
            Transform::Reciprocal => 1.0 / x,
            Transform::Log => x.ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Linear => "x",
            Transform::Square => "x^2",
            Transform::Reciprocal => "1/x",
            Transform::Log => "log",
        }
    }

    /// Whether the transform is undefined at non-positive arguments.
    pub fn needs_positive(self) -> bool {
        matches!(self, Transform::Reciprocal | Transform::Log)
    }
}

/// Ordered price transforms plus the number of external features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    transforms: Vec<Transform>,
    external_dim: usize,
}

impl FeatureBank {
    pub fn new(transforms: Vec<Transform>, external_dim: usize) -> Result<Self, DemandError> {
        if transforms.is_empty() {
            return Err(DemandError::InvalidArgument(
                "feature bank needs at least one price transform".into(),
            ));
        }
        for (i, t) in transforms.iter().enumerate() {
            if transforms[..i].contains(t) {
                return Err(DemandError::InvalidArgument(format!(
                    "duplicate transform `{}`",
                    t.name()
                )));
            }
        }
        Ok(Self {
            transforms,
            external_dim,
        })
    }

    /// `{x, x^2, 1/x}` with the given number of external features.
    pub fn standard(external_dim: usize) -> Self {
        Self {
            transforms: vec![Transform::Linear, Transform::Square, Transform::Reciprocal],
            external_dim,
        }
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// Number of price transforms `D`.
    pub fn price_dim(&self) -> usize {
        self.transforms.len()
    }

    /// Number of external features `D'`.
    pub fn external_dim(&self) -> usize {
        self.external_dim
    }

    pub fn needs_positive(&self) -> bool {
        self.transforms.iter().any(|t| t.needs_positive())
    }

    /// Design column count for `m` products: bias, `M*D` price features, `D'` externals.
    pub fn column_count(&self, m: usize) -> usize {
        1 + m * self.price_dim() + self.external_dim
    }
}

/// One observation: prices, external features and sold quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(default)]
    pub date: Option<String>,
    /// 1-based time-step tag; `None` means the single step `t = 1`.
    #[serde(default)]
    pub t: Option<usize>,
    pub prices: Vec<f64>,
    pub externals: Vec<f64>,
    pub quantities: Vec<f64>,
}

/// Historical observations with a fixed product count and external dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_products: usize,
    external_dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, DemandError> {
        let first = samples.first().ok_or(DemandError::EmptyDataset)?;
        let n_products = first.prices.len();
        let external_dim = first.externals.len();
        if n_products == 0 {
            return Err(DemandError::InvalidArgument("dataset has no products".into()));
        }
        for (row, s) in samples.iter().enumerate() {
            if s.prices.len() != n_products || s.quantities.len() != n_products {
                return Err(DemandError::DimensionMismatch(format!(
                    "row {row}: expected {n_products} prices and quantities"
                )));
            }
            if s.externals.len() != external_dim {
                return Err(DemandError::DimensionMismatch(format!(
                    "row {row}: expected {external_dim} external features"
                )));
            }
            if s.t == Some(0) {
                return Err(DemandError::InvalidArgument(format!(
                    "row {row}: time steps are 1-based"
                )));
            }
            let finite = s
                .prices
                .iter()
                .chain(&s.externals)
                .chain(&s.quantities)
                .all(|v| v.is_finite());
            if !finite {
                return Err(DemandError::Parse(format!("row {row}: non-finite value")));
            }
            if let Some((product, &value)) = s.prices.iter().enumerate().find(|(_, p)| **p <= 0.0) {
                return Err(DemandError::NonPositivePrice { row, product, value });
            }
        }
        Ok(Self {
            n_products,
            external_dim,
            samples,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_products(&self) -> usize {
        self.n_products
    }

    pub fn external_dim(&self) -> usize {
        self.external_dim
    }

    /// Horizon `T`: the largest time-step tag, or 1 when untagged.
    pub fn horizon(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.t.unwrap_or(1))
            .max()
            .unwrap_or(1)
    }

    /// Samples belonging to time step `t` (1-based).
    pub fn step(&self, t: usize) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| s.t.unwrap_or(1) == t)
            .collect()
    }

    /// Per-product historical (max, min) price.
    pub fn price_range(&self) -> Vec<(f64, f64)> {
        (0..self.n_products)
            .map(|m| {
                self.samples.iter().fold((f64::MIN, f64::MAX), |(hi, lo), s| {
                    (hi.max(s.prices[m]), lo.min(s.prices[m]))
                })
            })
            .collect()
    }
}

/// Fitted coefficients for every time step and product.
///
/// `beta[t][m]` is laid out as `m' * D + d`, matching the price block of the
/// design matrix. `mask[t][m]` marks the active entries of `beta[t][m]`;
/// inactive entries are exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub bank: FeatureBank,
    pub n_products: usize,
    pub horizon: usize,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub gamma: Vec<Vec<Vec<f64>>>,
    pub mask: Vec<Vec<Vec<bool>>>,
}

impl DemandModel {
    /// All-zero model with a full mask.
    pub fn zeros(bank: FeatureBank, n_products: usize, horizon: usize) -> Self {
        let pd = n_products * bank.price_dim();
        let ed = bank.external_dim();
        Self {
            n_products,
            horizon,
            alpha: vec![vec![0.0; n_products]; horizon],
            beta: vec![vec![vec![0.0; pd]; n_products]; horizon],
            gamma: vec![vec![vec![0.0; ed]; n_products]; horizon],
            mask: vec![vec![vec![true; pd]; n_products]; horizon],
            bank,
        }
    }

    /// Checks the shape invariants and the mask/zero consistency.
    pub fn validate(&self) -> Result<(), DemandError> {
        let (t, m) = (self.horizon, self.n_products);
        let pd = m * self.bank.price_dim();
        let ed = self.bank.external_dim();
        let shape_ok = self.alpha.len() == t
            && self.beta.len() == t
            && self.gamma.len() == t
            && self.mask.len() == t
            && self.alpha.iter().all(|a| a.len() == m)
            && self
                .beta
                .iter()
                .all(|b| b.len() == m && b.iter().all(|r| r.len() == pd))
            && self
                .gamma
                .iter()
                .all(|g| g.len() == m && g.iter().all(|r| r.len() == ed))
            && self
                .mask
                .iter()
                .all(|k| k.len() == m && k.iter().all(|r| r.len() == pd));
        if !shape_ok {
            return Err(DemandError::DimensionMismatch(format!(
                "coefficient tensors must be {t} x {m} x {pd} (beta) and {t} x {m} x {ed} (gamma)"
            )));
        }
        for (bt, kt) in self.beta.iter().zip(&self.mask) {
            for (b, k) in bt.iter().zip(kt) {
                if b.iter().zip(k).any(|(v, on)| !on && *v != 0.0) {
                    return Err(DemandError::InvalidArgument(
                        "masked coefficient is not zero".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `beta_{m m' d}` at 1-based time step `t`, 0-based products and transform.
    pub fn beta_at(&self, t: usize, m: usize, other: usize, d: usize) -> f64 {
        self.beta[t - 1][m][other * self.bank.price_dim() + d]
    }

    /// Predicted quantities for all products at time step `t` (1-based).
    pub fn predict(&self, prices: &[f64], externals: &[f64], t: usize) -> Result<Vec<f64>, DemandError> {
        if prices.len() != self.n_products || externals.len() != self.bank.external_dim() {
            return Err(DemandError::DimensionMismatch(format!(
                "expected {} prices and {} externals",
                self.n_products,
                self.bank.external_dim()
            )));
        }
        if t == 0 || t > self.horizon {
            return Err(DemandError::InvalidArgument(format!(
                "time step {t} outside 1..={}",
                self.horizon
            )));
        }
        let features = design::price_features(&self.bank, prices, 0)?;
        Ok(self.predict_features(&features, externals, t))
    }

    /// Prediction from already transformed price features (`m' * D + d` layout).
    pub fn predict_features(&self, features: &[f64], externals: &[f64], t: usize) -> Vec<f64> {
        let ti = t - 1;
        (0..self.n_products)
            .map(|m| {
                let price_part: f64 = self.beta[ti][m].iter().zip(features).map(|(b, f)| b * f).sum();
                let ext_part: f64 = self.gamma[ti][m].iter().zip(externals).map(|(c, g)| c * g).sum();
                self.alpha[ti][m] + price_part + ext_part
            })
            .collect()
    }

    /// Number of active price coefficients per (t, m).
    pub fn support_sizes(&self) -> Vec<Vec<usize>> {
        self.mask
            .iter()
            .map(|mt| mt.iter().map(|k| k.iter().filter(|on| **on).count()).collect())
            .collect()
    }
}

/// Free-function form of [`DemandModel::predict`].
pub fn predict(
    model: &DemandModel,
    prices: &[f64],
    externals: &[f64],
    t: usize,
) -> Result<Vec<f64>, DemandError> {
    model.predict(prices, externals, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(prices: Vec<f64>, q: Vec<f64>) -> Sample {
        Sample {
            date: None,
            t: None,
            prices,
            externals: vec![],
            quantities: q,
        }
    }

    #[test]
    fn bank_rejects_duplicates_and_empty() {
        assert!(FeatureBank::new(vec![], 0).is_err());
        assert!(FeatureBank::new(vec![Transform::Linear, Transform::Linear], 0).is_err());
        let bank = FeatureBank::new(vec![Transform::Log, Transform::Linear], 2).unwrap();
        assert_eq!(bank.column_count(3), 1 + 6 + 2);
    }

    #[test]
    fn dataset_checks_rows() {
        assert!(matches!(Dataset::new(vec![]), Err(DemandError::EmptyDataset)));
        let bad = vec![sample(vec![1.0, 2.0], vec![1.0, 1.0]), sample(vec![1.0], vec![1.0])];
        assert!(matches!(Dataset::new(bad), Err(DemandError::DimensionMismatch(_))));
        let neg = vec![sample(vec![1.0, -2.0], vec![1.0, 1.0])];
        assert!(matches!(
            Dataset::new(neg),
            Err(DemandError::NonPositivePrice { row: 0, product: 1, .. })
        ));
    }

    #[test]
    fn bias_only_model_predicts_alpha() {
        let mut model = DemandModel::zeros(FeatureBank::standard(1), 2, 1);
        model.alpha[0] = vec![3.0, 4.5];
        let q = model.predict(&[0.9, 1.1], &[5.0], 1).unwrap();
        assert_eq!(q, vec![3.0, 4.5]);
    }

    #[test]
    fn masked_price_is_inert() {
        let bank = FeatureBank::standard(0);
        let mut model = DemandModel::zeros(bank, 3, 1);
        for m in 0..3 {
            for k in 0..9 {
                model.beta[0][m][k] = 0.1 * (m + k) as f64 + 0.3;
            }
            // product 2's price features are structurally zero everywhere
            for d in 0..3 {
                model.beta[0][m][2 * 3 + d] = 0.0;
                model.mask[0][m][2 * 3 + d] = false;
            }
        }
        model.validate().unwrap();
        let a = model.predict(&[1.0, 0.9, 0.8], &[], 1).unwrap();
        let b = model.predict(&[1.0, 0.9, 1.7], &[], 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validate_catches_bad_mask() {
        let mut model = DemandModel::zeros(FeatureBank::standard(0), 2, 1);
        model.mask[0][1][0] = false;
        model.beta[0][1][0] = 1.0;
        assert!(model.validate().is_err());
    }
}
