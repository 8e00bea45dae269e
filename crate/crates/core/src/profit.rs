//! Gross profit over a price grid and its encoding as a one-of-K BQP.
//!
//! With prices restricted to candidates `P[m][k]`, the profit
//! `sum_t (p - c)' q^(t)(p)` splits into a per-product part `xi_m(p_m)` and a
//! pairwise part `zeta_{m m'}(p_m, p_m')`. Choosing candidate `k` for product
//! `m` is the indicator `z[m*K + k]`, which turns the profit into
//! `z'Qz + r'z` with `Q[(i,k),(j,l)] = zeta_ij(P_ik, P_jl)` and
//! `r[(i,k)] = xi_i(P_ik)`.
//!
//! Products and candidates are 0-based in this API. The constraint file format
//! uses 1-based `(product, candidate)` pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bqp::{BqpError, BqpProblem, LinearConstraint};
use crate::demand::{DemandError, DemandModel};

#[derive(Debug, Error)]
pub enum ProfitError {
    #[error("invalid price grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraint dimension mismatch: {0}")]
    ConstraintDimensionMismatch(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("malformed constraint file: {0}")]
    Parse(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Bqp(#[from] BqpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fitted demand model together with the candidate prices, unit costs and
/// the external features for every time step of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingInstance {
    model: DemandModel,
    grid: Vec<Vec<f64>>,
    costs: Vec<f64>,
    externals: Vec<Vec<f64>>,
}

impl PricingInstance {
    /// `grid[m]` lists the candidates of product `m` in strictly descending
    /// order; `grid[m][0]` is the list price. `externals[t]` holds `g^(t+1)`.
    pub fn new(
        model: DemandModel,
        grid: Vec<Vec<f64>>,
        costs: Vec<f64>,
        externals: Vec<Vec<f64>>,
    ) -> Result<Self, ProfitError> {
        model.validate()?;
        let m = model.n_products;
        if grid.len() != m {
            return Err(ProfitError::InvalidGrid(format!("{} rows for {m} products", grid.len())));
        }
        let k = grid.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(ProfitError::InvalidGrid("no candidates".into()));
        }
        for (row, cand) in grid.iter().enumerate() {
            if cand.len() != k {
                return Err(ProfitError::InvalidGrid(format!(
                    "product {} has {} candidates, expected {k}",
                    row + 1,
                    cand.len()
                )));
            }
            if cand.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(ProfitError::InvalidGrid(format!("product {} has a non-positive price", row + 1)));
            }
            if cand.windows(2).any(|w| w[0] <= w[1]) {
                return Err(ProfitError::InvalidGrid(format!(
                    "candidates of product {} are not strictly descending",
                    row + 1
                )));
            }
        }
        if costs.len() != m || costs.iter().any(|c| !c.is_finite()) {
            return Err(ProfitError::DimensionMismatch(format!("expected {m} finite costs")));
        }
        if externals.len() != model.horizon {
            return Err(ProfitError::DimensionMismatch(format!(
                "expected external features for {} time steps, got {}",
                model.horizon,
                externals.len()
            )));
        }
        let ed = model.bank.external_dim();
        if externals.iter().any(|g| g.len() != ed) {
            return Err(ProfitError::DimensionMismatch(format!("every time step needs {ed} external features")));
        }
        Ok(Self {
            model,
            grid,
            costs,
            externals,
        })
    }

    pub fn model(&self) -> &DemandModel {
        &self.model
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn externals(&self) -> &[Vec<f64>] {
        &self.externals
    }

    pub fn n_products(&self) -> usize {
        self.grid.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.grid[0].len()
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon
    }

    /// The same instance with zero costs, whose objective is sales revenue.
    pub fn revenue_mode(&self) -> Self {
        Self {
            costs: vec![0.0; self.costs.len()],
            ..self.clone()
        }
    }

    /// `xi_m(price) = sum_t (price - c_m)(alpha_m^(t) + sum_d gamma_md^(t) g_d^(t))`.
    pub fn xi(&self, m: usize, price: f64) -> f64 {
        let margin = price - self.costs[m];
        (0..self.horizon())
            .map(|t| {
                let ext: f64 = self.model.gamma[t][m]
                    .iter()
                    .zip(&self.externals[t])
                    .map(|(c, g)| c * g)
                    .sum();
                margin * (self.model.alpha[t][m] + ext)
            })
            .sum()
    }

    /// `zeta_{m m'}(p, p') = sum_t (p - c_m) sum_d beta_{m m' d}^(t) f_d(p')`.
    pub fn zeta(&self, m: usize, other: usize, price: f64, other_price: f64) -> Result<f64, ProfitError> {
        let bank = &self.model.bank;
        if other_price <= 0.0 && bank.needs_positive() {
            return Err(DemandError::NonPositivePrice {
                row: 0,
                product: other,
                value: other_price,
            }
            .into());
        }
        let feats: Vec<f64> = bank.transforms().iter().map(|f| f.apply(other_price)).collect();
        Ok(self.zeta_features(m, other, price, &feats))
    }

    fn zeta_features(&self, m: usize, other: usize, price: f64, feats: &[f64]) -> f64 {
        let margin = price - self.costs[m];
        let d = feats.len();
        (0..self.horizon())
            .map(|t| {
                let coefs = &self.model.beta[t][m][other * d..(other + 1) * d];
                margin * coefs.iter().zip(feats).map(|(b, f)| b * f).sum::<f64>()
            })
            .sum()
    }

    /// Profit of a price vector evaluated through the demand model.
    pub fn profit(&self, prices: &[f64]) -> Result<f64, ProfitError> {
        let mut total = 0.0;
        for t in 0..self.horizon() {
            let q = self.model.predict(prices, &self.externals[t], t + 1)?;
            total += prices
                .iter()
                .zip(&self.costs)
                .zip(&q)
                .map(|((p, c), q)| (p - c) * q)
                .sum::<f64>();
        }
        Ok(total)
    }

    /// Predicted units per product summed over the horizon.
    pub fn units(&self, prices: &[f64]) -> Result<Vec<f64>, ProfitError> {
        let mut units = vec![0.0; self.n_products()];
        for t in 0..self.horizon() {
            let q = self.model.predict(prices, &self.externals[t], t + 1)?;
            units.iter_mut().zip(q).for_each(|(u, v)| *u += v);
        }
        Ok(units)
    }

    /// Candidate prices selected by a one-hot `z`.
    pub fn prices_of(&self, z: &[u8]) -> Result<Vec<f64>, ProfitError> {
        let k = self.n_candidates();
        if z.len() != k * self.n_products() {
            return Err(ProfitError::DimensionMismatch(format!(
                "z has {} entries, expected {}",
                z.len(),
                k * self.n_products()
            )));
        }
        self.grid
            .iter()
            .enumerate()
            .map(|(m, cand)| {
                let block = &z[m * k..(m + 1) * k];
                match block.iter().filter(|v| **v != 0).count() {
                    1 => Ok(cand[block.iter().position(|v| *v != 0).unwrap()]),
                    n => Err(ProfitError::DimensionMismatch(format!(
                        "product {} has {n} selected candidates",
                        m + 1
                    ))),
                }
            })
            .collect()
    }

    /// Assembles `Q`, `r`, the one-of-K partition and the lowered business
    /// constraints.
    pub fn build_bqp(&self, constraints: &[BusinessConstraint]) -> Result<BqpProblem, ProfitError> {
        let (m, k) = (self.n_products(), self.n_candidates());
        let n = m * k;
        let bank = &self.model.bank;
        let feats: Vec<Vec<Vec<f64>>> = self
            .grid
            .iter()
            .map(|cand| {
                cand.iter()
                    .map(|&p| bank.transforms().iter().map(|f| f.apply(p)).collect())
                    .collect()
            })
            .collect();
        let mut q = vec![0.0; n * n];
        for i in 0..m {
            for ki in 0..k {
                let row = (i * k + ki) * n;
                for j in 0..m {
                    for l in 0..k {
                        q[row + j * k + l] = self.zeta_features(i, j, self.grid[i][ki], &feats[j][l]);
                    }
                }
            }
        }
        let r: Vec<f64> = (0..n).map(|idx| self.xi(idx / k, self.grid[idx / k][idx % k])).collect();
        let partition: Vec<Vec<usize>> = (0..m).map(|b| (b * k..(b + 1) * k).collect()).collect();
        let mut eqs = Vec::new();
        let mut ineqs = Vec::new();
        for c in constraints {
            match c.lower(m, k)? {
                Lowered::Eq(l) => eqs.push(l),
                Lowered::Ineq(l) => ineqs.push(l),
            }
        }
        Ok(BqpProblem::new(q, r, partition, eqs, ineqs)?)
    }
}

/// Candidates obtained by splitting `[high, low]` into `k` equally spaced
/// prices, highest first. `ranges[m] = (high, low)`.
pub fn equal_split_grid(ranges: &[(f64, f64)], k: usize) -> Result<Vec<Vec<f64>>, ProfitError> {
    if k == 0 {
        return Err(ProfitError::InvalidGrid("k must be positive".into()));
    }
    ranges
        .iter()
        .enumerate()
        .map(|(m, &(hi, lo))| {
            if k == 1 {
                return Ok(vec![hi]);
            }
            if !(hi > lo && lo > 0.0) {
                return Err(ProfitError::InvalidGrid(format!(
                    "product {} needs high > low > 0, got ({hi}, {lo})",
                    m + 1
                )));
            }
            let step = (hi - lo) / (k - 1) as f64;
            Ok((0..k)
                .map(|j| if j + 1 == k { lo } else { hi - step * j as f64 })
                .collect())
        })
        .collect()
}

/// Business rule restricting the admissible price vectors.
///
/// Linear coefficients are dense over the `M*K` indicators (`m*K + k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BusinessConstraint {
    /// At most `limit` products may leave their list price.
    MaxDiscountCount { limit: usize },
    LinearEq { coeffs: Vec<f64>, rhs: f64 },
    LinearIneq { coeffs: Vec<f64>, rhs: f64 },
}

enum Lowered {
    Eq(LinearConstraint),
    Ineq(LinearConstraint),
}

impl BusinessConstraint {
    fn lower(&self, m: usize, k: usize) -> Result<Lowered, ProfitError> {
        let n = m * k;
        let dense = |coeffs: &[f64], rhs: f64| -> Result<LinearConstraint, ProfitError> {
            if coeffs.len() != n {
                return Err(ProfitError::ConstraintDimensionMismatch(format!(
                    "{} coefficients for {n} variables",
                    coeffs.len()
                )));
            }
            if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(ProfitError::InvalidConstraint("non-finite coefficient".into()));
            }
            Ok(LinearConstraint::new(coeffs.to_vec(), rhs))
        };
        match self {
            Self::MaxDiscountCount { limit } => {
                if *limit > m {
                    return Err(ProfitError::InvalidConstraint(format!(
                        "discount limit {limit} exceeds {m} products"
                    )));
                }
                // sum_m z_{m,list} >= M - L, stored as <=
                let mut coeffs = vec![0.0; n];
                for b in 0..m {
                    coeffs[b * k] = -1.0;
                }
                Ok(Lowered::Ineq(LinearConstraint::new(coeffs, *limit as f64 - m as f64)))
            }
            Self::LinearEq { coeffs, rhs } => dense(coeffs, *rhs).map(Lowered::Eq),
            Self::LinearIneq { coeffs, rhs } => dense(coeffs, *rhs).map(Lowered::Ineq),
        }
    }
}

/// One entry of a sparse constraint row, 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub product: usize,
    pub candidate: usize,
    pub coeff: f64,
}

/// Constraint as written in a constraint file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    MaxDiscountCount { limit: usize },
    LinearEq { terms: Vec<Term>, rhs: f64 },
    LinearIneq { terms: Vec<Term>, rhs: f64 },
}

impl ConstraintSpec {
    /// Resolves 1-based `(product, candidate)` terms to dense coefficients.
    pub fn resolve(&self, m: usize, k: usize) -> Result<BusinessConstraint, ProfitError> {
        let dense = |terms: &[Term]| -> Result<Vec<f64>, ProfitError> {
            let mut coeffs = vec![0.0; m * k];
            for t in terms {
                if t.product == 0 || t.product > m || t.candidate == 0 || t.candidate > k {
                    return Err(ProfitError::ConstraintDimensionMismatch(format!(
                        "term ({}, {}) outside {m} products x {k} candidates",
                        t.product, t.candidate
                    )));
                }
                coeffs[(t.product - 1) * k + t.candidate - 1] += t.coeff;
            }
            Ok(coeffs)
        };
        Ok(match self {
            Self::MaxDiscountCount { limit } => BusinessConstraint::MaxDiscountCount { limit: *limit },
            Self::LinearEq { terms, rhs } => BusinessConstraint::LinearEq {
                coeffs: dense(terms)?,
                rhs: *rhs,
            },
            Self::LinearIneq { terms, rhs } => BusinessConstraint::LinearIneq {
                coeffs: dense(terms)?,
                rhs: *rhs,
            },
        })
    }
}

/// Parses a JSON list of constraint specs for an `m x k` grid.
pub fn parse_constraints(text: &str, m: usize, k: usize) -> Result<Vec<BusinessConstraint>, ProfitError> {
    let specs: Vec<ConstraintSpec> = serde_json::from_str(text).map_err(|e| ProfitError::Parse(e.to_string()))?;
    specs.iter().map(|s| s.resolve(m, k)).collect()
}

pub fn load_constraints(path: &Path, m: usize, k: usize) -> Result<Vec<BusinessConstraint>, ProfitError> {
    parse_constraints(&std::fs::read_to_string(path)?, m, k)
}
