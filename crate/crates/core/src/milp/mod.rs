//! Standard linearization of the pricing BQP for external MILP solvers.
//!
//! Every product `z_i z_j` with `i < j` becomes a continuous `zb_ij >= 0`
//! bounded by `zb_ij <= z_i` and `zb_ij <= z_j`. Within a one-of-K block the
//! identity `(sum_{i in I_m} z_i - 1) z_j = 0` gives one zero-sum row per
//! member `j`. There is no `zb_ij >= z_i + z_j - 1` row, so the model is a
//! relaxation: it is exact on binaries only when `zb = z z'`.
//!
//! Variables are 0-based here and 1-based in LP names (`z_1`, `zb_1_2`).

mod lp;

use serde::{Deserialize, Serialize};

use crate::bqp::BqpProblem;

pub use lp::{export_lp, parse_lp, read_lp, write_lp};

#[derive(Debug, thiserror::Error)]
pub enum MilpError {
    #[error("partition blocks must be contiguous and in order")]
    NonContiguousPartition,
    #[error("LP parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// One linear row over variable indices (see [`MilpModel::var_name`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl MilpRow {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[*v]).sum()
    }
}

/// Maximization model with `n` binaries `z` followed by the `n(n-1)/2`
/// continuous `zb_ij` (`i < j`, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    n: usize,
    objective: Vec<(usize, f64)>,
    rows: Vec<MilpRow>,
}

impl MilpModel {
    pub fn new(n: usize, objective: Vec<(usize, f64)>, rows: Vec<MilpRow>) -> Result<Self, MilpError> {
        let total = n + n * n.saturating_sub(1) / 2;
        let ok = objective.iter().all(|(v, _)| *v < total)
            && rows.iter().all(|r| r.terms.iter().all(|(v, _)| *v < total));
        if !ok {
            return Err(MilpError::DimensionMismatch(format!("variable index beyond {total}")));
        }
        Ok(Self { n, objective, rows })
    }

    /// Number of binaries.
    pub fn n_binary(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.n + self.n * self.n.saturating_sub(1) / 2
    }

    /// Nonzero objective coefficients by increasing variable index.
    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn rows(&self) -> &[MilpRow] {
        &self.rows
    }

    /// Index of `zb_ij`, `i < j < n`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        pair_index(self.n, i, j)
    }

    /// Inverse of [`Self::pair_index`] on auxiliary indices.
    pub fn pair_of(&self, var: usize) -> Option<(usize, usize)> {
        let mut k = var.checked_sub(self.n)?;
        for i in 0..self.n {
            let len = self.n - i - 1;
            if k < len {
                return Some((i, i + 1 + k));
            }
            k -= len;
        }
        None
    }

    pub fn var_name(&self, var: usize) -> String {
        match self.pair_of(var) {
            Some((i, j)) => format!("zb_{}_{}", i + 1, j + 1),
            None => format!("z_{}", var + 1),
        }
    }

    /// Full variable vector for binary `z` with `zb_ij = z_i z_j`.
    pub fn implied_point(&self, z: &[u8]) -> Vec<f64> {
        let mut v: Vec<f64> = z.iter().map(|&b| b as f64).collect();
        for i in 0..self.n {
            for j in i + 1..self.n {
                v.push((z[i] & z[j]) as f64);
            }
        }
        v
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * values[*v]).sum()
    }

    /// All rows and bounds hold within `tol`; binaries must be exactly 0 or 1.
    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        let binaries = values[..self.n].iter().all(|v| *v == 0.0 || *v == 1.0);
        let bounds = values[self.n..].iter().all(|v| *v >= -tol);
        binaries
            && bounds
            && self.rows.iter().all(|r| {
                let lhs = r.lhs(values);
                match r.sense {
                    Sense::Le => lhs <= r.rhs + tol,
                    Sense::Ge => lhs >= r.rhs - tol,
                    Sense::Eq => (lhs - r.rhs).abs() <= tol,
                }
            })
    }
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    // pairs before row i: sum_{a<i} (n - a - 1)
    n + i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn sparse(terms: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    terms.into_iter().filter(|(_, c)| *c != 0.0).collect()
}

/// Builds the linearized model. The partition must consist of contiguous
/// blocks in order, as produced by `PricingInstance::build_bqp`.
pub fn linearize(prob: &BqpProblem) -> Result<MilpModel, MilpError> {
    let n = prob.n();
    let mut next = 0;
    for block in prob.partition() {
        for &i in block {
            if i != next {
                return Err(MilpError::NonContiguousPartition);
            }
            next += 1;
        }
    }
    if next != n {
        return Err(MilpError::NonContiguousPartition);
    }

    let mut objective = sparse((0..n).map(|i| (i, prob.r()[i] + prob.q_at(i, i))));
    for i in 0..n {
        for j in i + 1..n {
            let c = prob.q_at(i, j) + prob.q_at(j, i);
            if c != 0.0 {
                objective.push((pair_index(n, i, j), c));
            }
        }
    }

    let mut rows = Vec::new();
    for (m, block) in prob.partition().iter().enumerate() {
        rows.push(MilpRow {
            name: format!("block_{}", m + 1),
            terms: block.iter().map(|&i| (i, 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            let zb = pair_index(n, i, j);
            for (tag, z) in [("lo", i), ("hi", j)] {
                rows.push(MilpRow {
                    name: format!("link_{tag}_{}_{}", i + 1, j + 1),
                    terms: vec![(zb, 1.0), (z, -1.0)],
                    sense: Sense::Le,
                    rhs: 0.0,
                });
            }
        }
    }
    for block in prob.partition() {
        for &j in block {
            let terms: Vec<(usize, f64)> = block
                .iter()
                .filter(|&&i| i != j)
                .map(|&i| (pair_index(n, i.min(j), i.max(j)), 1.0))
                .collect();
            if !terms.is_empty() {
                rows.push(MilpRow {
                    name: format!("within_{}", j + 1),
                    terms,
                    sense: Sense::Eq,
                    rhs: 0.0,
                });
            }
        }
    }
    for (l, c) in prob.equalities().iter().enumerate() {
        rows.push(MilpRow {
            name: format!("eq_{}", l + 1),
            terms: sparse(c.coeffs.iter().copied().enumerate()),
            sense: Sense::Eq,
            rhs: c.rhs,
        });
    }
    for (l, c) in prob.inequalities().iter().enumerate() {
        rows.push(MilpRow {
            name: format!("ineq_{}", l + 1),
            terms: sparse(c.coeffs.iter().copied().enumerate()),
            sense: Sense::Le,
            rhs: c.rhs,
        });
    }
    MilpModel::new(n, objective, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqp::{brute_force, LinearConstraint};
    use proptest::prelude::*;

    fn blocks(m: usize, k: usize) -> Vec<Vec<usize>> {
        (0..m).map(|b| (b * k..(b + 1) * k).collect()).collect()
    }

    /// Every binary point of length `n`.
    fn all_points(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0u32..1 << n).map(move |bits| (0..n).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    #[test]
    fn single_block_of_two() {
        let prob = BqpProblem::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -0.5], blocks(1, 2), vec![], vec![]).unwrap();
        let milp = linearize(&prob).unwrap();
        assert_eq!(milp.n_vars(), 3);
        assert_eq!(milp.var_name(2), "zb_1_2");
        let within: Vec<&MilpRow> = milp.rows().iter().filter(|r| r.name.starts_with("within")).collect();
        assert_eq!(within.len(), 2);
        for r in within {
            assert_eq!(r.terms, vec![(2, 1.0)]);
            assert_eq!((r.sense, r.rhs), (Sense::Eq, 0.0));
        }
        // (r_i + q_ii) and q_12 + q_21
        assert_eq!(milp.objective(), &[(0, 1.5), (1, 3.5), (2, 5.0)]);
    }

    #[test]
    fn pair_indexing_round_trips() {
        let prob = BqpProblem::new(vec![0.0; 36], vec![0.0; 6], blocks(2, 3), vec![], vec![]).unwrap();
        let milp = linearize(&prob).unwrap();
        assert_eq!(milp.n_vars(), 6 + 15);
        let mut seen = 6;
        for i in 0..6 {
            for j in i + 1..6 {
                assert_eq!(milp.pair_index(i, j), seen);
                assert_eq!(milp.pair_of(seen), Some((i, j)));
                seen += 1;
            }
        }
        assert_eq!(milp.pair_of(3), None);
    }

    #[test]
    fn rejects_interleaved_blocks() {
        let prob = BqpProblem::new(vec![0.0; 16], vec![0.0; 4], vec![vec![0, 2], vec![1, 3]], vec![], vec![]).unwrap();
        assert!(matches!(linearize(&prob), Err(MilpError::NonContiguousPartition)));
    }

    #[test]
    fn feasibility_matches_bqp_on_all_binaries() {
        let eq = LinearConstraint::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1.0);
        let ineq = LinearConstraint::new(vec![0.0, 0.0, 2.0, 0.0, 0.0, 1.0], 2.0);
        let prob = BqpProblem::new(vec![1.0; 36], vec![1.0; 6], blocks(2, 3), vec![eq], vec![ineq]).unwrap();
        let milp = linearize(&prob).unwrap();
        for z in all_points(6) {
            let v = milp.implied_point(&z);
            assert_eq!(milp.is_feasible(&v, 0.0), prob.is_feasible(&z).feasible, "{z:?}");
        }
    }

    #[test]
    fn enumerated_optimum_matches_brute_force() {
        let q: Vec<f64> = (0..36).map(|k| ((k * 7919) % 23) as f64 - 11.0).collect();
        let r: Vec<f64> = (0..6).map(|k| ((k * 31) % 7) as f64 - 3.0).collect();
        let prob = BqpProblem::new(q, r, blocks(2, 3), vec![], vec![]).unwrap();
        let milp = linearize(&prob).unwrap();
        let best = all_points(6)
            .map(|z| milp.implied_point(&z))
            .filter(|v| milp.is_feasible(v, 0.0))
            .map(|v| milp.objective_value(&v))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, brute_force(&prob).unwrap().objective);
    }

    proptest! {
        #[test]
        fn objective_identity_on_integer_data(
            m in 1usize..=3,
            k in 1usize..=3,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = m * k;
            let q = (0..n * n).map(|_| rng.random_range(-50i32..=50) as f64).collect();
            let r = (0..n).map(|_| rng.random_range(-50i32..=50) as f64).collect();
            let prob = BqpProblem::new(q, r, blocks(m, k), vec![], vec![]).unwrap();
            let milp = linearize(&prob).unwrap();
            prop_assert_eq!(milp.n_vars(), n + n * (n - 1) / 2);
            for z in all_points(n).filter(|z| prob.is_feasible(z).feasible) {
                let v = milp.implied_point(&z);
                prop_assert!(milp.is_feasible(&v, 0.0));
                prop_assert_eq!(milp.objective_value(&v), prob.objective(&z).unwrap());
            }
        }
    }
}
