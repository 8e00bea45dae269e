//! Binary quadratic programs with a one-hot partition and linear side constraints.
//!
//! ```text
//! maximize   f(z) = z' Q z + r' z
//! subject to z in {0,1}^n
//!            sum_{i in I_m} z_i = 1      for every block I_m
//!            a_u' z  = b_u
//!            c_v' z <= d_v
//! ```
//!
//! `Q` is dense, row-major and not necessarily symmetric. Indices are 0-based.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Enumeration guard for [`brute_force`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;
/// Tolerance for constraints with non-integral data.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BqpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("search space of {count} points exceeds the enumeration limit")]
    TooLarge { count: u128 },
    #[error("no feasible point exists")]
    Infeasible,
    #[error("malformed problem: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `coeffs' z (= or <=) rhs`, dense over the `n` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn lhs(&self, z: &[u8]) -> f64 {
        self.coeffs
            .iter()
            .zip(z)
            .filter(|(_, zi)| **zi != 0)
            .map(|(c, _)| c)
            .sum()
    }

    fn integral(&self) -> bool {
        let int = |v: f64| v.fract() == 0.0 && v.abs() < 2f64.powi(53);
        int(self.rhs) && self.coeffs.iter().all(|c| int(*c))
    }

    fn exact_lhs(&self, z: &[u8]) -> i128 {
        self.coeffs
            .iter()
            .zip(z)
            .filter(|(_, zi)| **zi != 0)
            .map(|(c, _)| *c as i128)
            .sum()
    }

    /// Residual `lhs - rhs` and whether an equality/inequality is satisfied.
    fn check(&self, z: &[u8], equality: bool) -> (f64, bool) {
        if self.integral() {
            let lhs = self.exact_lhs(z);
            let rhs = self.rhs as i128;
            let ok = if equality { lhs == rhs } else { lhs <= rhs };
            ((lhs - rhs) as f64, ok)
        } else {
            let diff = self.lhs(z) - self.rhs;
            let ok = if equality {
                diff.abs() <= FEASIBILITY_TOL
            } else {
                diff <= FEASIBILITY_TOL
            };
            (diff, ok)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BqpProblem {
    n: usize,
    q: Vec<f64>,
    r: Vec<f64>,
    partition: Vec<Vec<usize>>,
    #[serde(default)]
    equalities: Vec<LinearConstraint>,
    #[serde(default)]
    inequalities: Vec<LinearConstraint>,
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Block `block` does not contain exactly one 1.
    Partition { block: usize, count: usize },
    Equality { index: usize, residual: f64 },
    Inequality { index: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BqpSolution {
    pub z: Vec<u8>,
    pub objective: f64,
    pub feasible: bool,
}

impl BqpProblem {
    /// Builds and validates a problem. `q` is row-major `n x n`.
    pub fn new(
        q: Vec<f64>,
        r: Vec<f64>,
        partition: Vec<Vec<usize>>,
        equalities: Vec<LinearConstraint>,
        inequalities: Vec<LinearConstraint>,
    ) -> Result<Self, BqpError> {
        let prob = Self {
            n: r.len(),
            q,
            r,
            partition,
            equalities,
            inequalities,
        };
        prob.validate()?;
        Ok(prob)
    }

    fn validate(&self) -> Result<(), BqpError> {
        let n = self.n;
        if self.r.len() != n || self.q.len() != n * n {
            return Err(BqpError::DimensionMismatch(format!(
                "Q must be {n}x{n} and r must have {n} entries"
            )));
        }
        if !self.q.iter().all(|v| v.is_finite()) {
            return Err(BqpError::NonFinite("Q"));
        }
        if !self.r.iter().all(|v| v.is_finite()) {
            return Err(BqpError::NonFinite("r"));
        }
        let mut seen = vec![false; n];
        for (m, block) in self.partition.iter().enumerate() {
            if block.is_empty() {
                return Err(BqpError::InvalidPartition(format!("block {m} is empty")));
            }
            for &i in block {
                if i >= n {
                    return Err(BqpError::InvalidPartition(format!("index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(BqpError::InvalidPartition(format!("index {i} appears twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(BqpError::InvalidPartition(format!("index {i} is not covered")));
        }
        for c in self.equalities.iter().chain(&self.inequalities) {
            if c.coeffs.len() != n {
                return Err(BqpError::DimensionMismatch(format!(
                    "constraint has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || !c.coeffs.iter().all(|v| v.is_finite()) {
                return Err(BqpError::NonFinite("linear constraint"));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_at(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn equalities(&self) -> &[LinearConstraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[LinearConstraint] {
        &self.inequalities
    }

    pub fn has_side_constraints(&self) -> bool {
        !self.equalities.is_empty() || !self.inequalities.is_empty()
    }

    /// Block size `K` when the partition is `{0..K}, {K..2K}, ...`.
    pub fn contiguous_block_size(&self) -> Option<usize> {
        let k = self.partition.first()?.len();
        let contiguous = self
            .partition
            .iter()
            .enumerate()
            .all(|(m, b)| b.len() == k && b.iter().enumerate().all(|(j, &i)| i == m * k + j));
        contiguous.then_some(k)
    }

    /// Same problem with `Q` replaced by `(Q + Q')/2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.n;
        let mut q = self.q.clone();
        for i in 0..n {
            for j in 0..n {
                q[i * n + j] = 0.5 * (self.q[i * n + j] + self.q[j * n + i]);
            }
        }
        Self { q, ..self.clone() }
    }

    pub fn with_constraints(mut self, equalities: Vec<LinearConstraint>, inequalities: Vec<LinearConstraint>) -> Result<Self, BqpError> {
        self.equalities = equalities;
        self.inequalities = inequalities;
        self.validate()?;
        Ok(self)
    }

    /// `f(z) = z'Qz + r'z`.
    pub fn objective(&self, z: &[u8]) -> Result<f64, BqpError> {
        if z.len() != self.n {
            return Err(BqpError::DimensionMismatch(format!(
                "z has {} entries, expected {}",
                z.len(),
                self.n
            )));
        }
        let ones: Vec<usize> = (0..self.n).filter(|&i| z[i] != 0).collect();
        Ok(self.objective_on(&ones))
    }

    /// Objective for the point whose 1-entries are `ones`.
    pub fn objective_on(&self, ones: &[usize]) -> f64 {
        let mut f = 0.0;
        for &i in ones {
            let row = &self.q[i * self.n..(i + 1) * self.n];
            f += ones.iter().map(|&j| row[j]).sum::<f64>() + self.r[i];
        }
        f
    }

    /// Checks the one-hot blocks and every side constraint.
    pub fn is_feasible(&self, z: &[u8]) -> FeasibilityReport {
        let mut violations = Vec::new();
        if z.len() != self.n {
            return FeasibilityReport {
                feasible: false,
                violations: vec![Violation::Partition { block: 0, count: 0 }],
            };
        }
        for (block, idx) in self.partition.iter().enumerate() {
            let count = idx.iter().filter(|&&i| z[i] != 0).count();
            if count != 1 {
                violations.push(Violation::Partition { block, count });
            }
        }
        for (index, c) in self.equalities.iter().enumerate() {
            let (residual, ok) = c.check(z, true);
            if !ok {
                violations.push(Violation::Equality { index, residual });
            }
        }
        for (index, c) in self.inequalities.iter().enumerate() {
            let (residual, ok) = c.check(z, false);
            if !ok {
                violations.push(Violation::Inequality { index, residual });
            }
        }
        FeasibilityReport {
            feasible: violations.is_empty(),
            violations,
        }
    }

    /// One-hot vector choosing `choice[m]` (position inside block `m`).
    pub fn point_from_choices(&self, choice: &[usize]) -> Vec<u8> {
        let mut z = vec![0u8; self.n];
        for (block, &k) in self.partition.iter().zip(choice) {
            z[block[k]] = 1;
        }
        z
    }

    /// Position of the 1 inside each block, when every block is one-hot.
    pub fn choices_from_point(&self, z: &[u8]) -> Option<Vec<usize>> {
        self.partition
            .iter()
            .map(|block| {
                let mut hits = block.iter().enumerate().filter(|(_, &i)| z[i] != 0);
                match (hits.next(), hits.next()) {
                    (Some((k, _)), None) => Some(k),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BqpError> {
        let prob: Self = serde_json::from_str(text).map_err(|e| BqpError::Parse(e.to_string()))?;
        prob.validate()?;
        Ok(prob)
    }

    pub fn load(path: &Path) -> Result<Self, BqpError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), BqpError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Free-function form of [`BqpProblem::objective`].
pub fn objective(prob: &BqpProblem, z: &[u8]) -> Result<f64, BqpError> {
    prob.objective(z)
}

/// Free-function form of [`BqpProblem::is_feasible`].
pub fn is_feasible(prob: &BqpProblem, z: &[u8]) -> FeasibilityReport {
    prob.is_feasible(z)
}

/// Lexicographic order on 0/1 vectors.
pub(crate) fn lex_cmp(a: &[u8], b: &[u8]) -> Ordering {
    a.cmp(b)
}

/// Whether candidate `(f, z)` beats the incumbent: larger objective, then
/// lexicographically smaller `z`.
pub(crate) fn improves(f: f64, z: &[u8], best: Option<(f64, &[u8])>) -> bool {
    match best {
        None => true,
        Some((bf, bz)) => f > bf || (f == bf && lex_cmp(z, bz) == Ordering::Less),
    }
}

/// Exhaustive search over all one-hot points.
pub fn brute_force(prob: &BqpProblem) -> Result<BqpSolution, BqpError> {
    let sizes: Vec<usize> = prob.partition.iter().map(Vec::len).collect();
    let count = sizes
        .iter()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k as u128))
        .unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT {
        return Err(BqpError::TooLarge { count });
    }
    let mut choice = vec![0usize; sizes.len()];
    let mut ones: Vec<usize> = prob.partition.iter().map(|b| b[0]).collect();
    let mut best: Option<(f64, Vec<u8>)> = None;
    loop {
        let z = prob.point_from_choices(&choice);
        if !prob.has_side_constraints() || prob.is_feasible(&z).feasible {
            let f = prob.objective_on(&ones);
            if improves(f, &z, best.as_ref().map(|(bf, bz)| (*bf, bz.as_slice()))) {
                best = Some((f, z));
            }
        }
        // odometer over the block choices
        let mut m = sizes.len();
        loop {
            if m == 0 {
                let (objective, z) = best.ok_or(BqpError::Infeasible)?;
                return Ok(BqpSolution {
                    z,
                    objective,
                    feasible: true,
                });
            }
            m -= 1;
            choice[m] += 1;
            if choice[m] < sizes[m] {
                ones[m] = prob.partition[m][choice[m]];
                break;
            }
            choice[m] = 0;
            ones[m] = prob.partition[m][0];
        }
    }
}
