//! Dense primal-dual interior-point solver for
//!
//! ```text
//! maximize   A . Y
//! subject to B_j . Y  = b_j
//!            C_l . Y <= d_l
//!            Y PSD
//! ```
//!
//! where `U . V = tr(U V)`. Inequalities get nonnegative slack variables, so the
//! cone is `PSD(N) x R_+^L`. The search direction is HKM with Mehrotra's
//! predictor-corrector; see [`solve`].

mod ipm;
mod presolve;
pub mod sdpa;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ipm::solve;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem has no constraints")]
    NoConstraints,
    #[error("malformed SDPA file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Symmetric sparse matrix stored as its upper triangle.
///
/// Entries are sorted by `(row, col)`, `row <= col`, with duplicates merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymSparse {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    /// Builds from `(i, j, v)` triplets, each setting both `(i, j)` and
    /// `(j, i)` to `v`. Repeated positions are summed.
    pub fn new(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, SdpError> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(SdpError::InvalidProblem(format!("entry ({i}, {j}) outside dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(SdpError::InvalidProblem("non-finite matrix entry".into()));
            }
            entries.push((i.min(j), i.max(j), v));
        }
        entries.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        Ok(Self { dim, entries: merged })
    }

    /// Upper triangle of a dense symmetric matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self, SdpError> {
        let n = m.nrows();
        let trip = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| (i, j, m[(i, j)]));
        Self::new(n, trip)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle entries `(i, j, v)` with `i <= j`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of nonzeros in the full (both triangles) matrix.
    pub fn full_nnz(&self) -> usize {
        self.entries.iter().map(|e| if e.0 == e.1 { 1 } else { 2 }).sum()
    }

    /// Every nonzero `(i, j, v)` of the full matrix.
    pub fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.full_nnz());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }

    /// `self . Y` for a dense symmetric `Y`.
    pub fn dot_dense(&self, y: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * y[(i, i)] } else { v * (y[(i, j)] + y[(j, i)]) })
            .sum()
    }

    /// `self . other`.
    pub fn dot(&self, other: &SymSparse) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        while p < a.len() && q < b.len() {
            match (a[p].0, a[p].1).cmp(&(b[q].0, b[q].1)) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let w = if a[p].0 == a[p].1 { 1.0 } else { 2.0 };
                    acc += w * a[p].2 * b[q].2;
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    pub fn frobenius(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `target += scale * self`.
    pub fn add_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            target[(i, j)] += scale * v;
            if i != j {
                target[(j, i)] += scale * v;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.add_to(&mut m, 1.0);
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * s)).collect(),
        }
    }
}

/// `matrix . Y (= or <=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpConstraint {
    pub matrix: SymSparse,
    pub rhs: f64,
}

impl SdpConstraint {
    pub fn new(matrix: SymSparse, rhs: f64) -> Self {
        Self { matrix, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    dim: usize,
    objective: DMatrix<f64>,
    equalities: Vec<SdpConstraint>,
    inequalities: Vec<SdpConstraint>,
}

impl SdpProblem {
    /// Validates shapes, symmetry of `objective` (to 1e-12) and finiteness.
    pub fn new(
        objective: DMatrix<f64>,
        equalities: Vec<SdpConstraint>,
        inequalities: Vec<SdpConstraint>,
    ) -> Result<Self, SdpError> {
        let dim = objective.nrows();
        if objective.ncols() != dim || dim == 0 {
            return Err(SdpError::InvalidProblem("objective must be square and nonempty".into()));
        }
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(SdpError::InvalidProblem("non-finite objective entry".into()));
        }
        let scale = 1.0 + objective.amax();
        for i in 0..dim {
            for j in 0..i {
                if (objective[(i, j)] - objective[(j, i)]).abs() > 1e-12 * scale {
                    return Err(SdpError::InvalidProblem(format!("objective is not symmetric at ({i}, {j})")));
                }
            }
        }
        for c in equalities.iter().chain(&inequalities) {
            if c.matrix.dim() != dim {
                return Err(SdpError::InvalidProblem(format!(
                    "constraint of dimension {} in a problem of dimension {dim}",
                    c.matrix.dim()
                )));
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidProblem("non-finite right-hand side".into()));
            }
        }
        if equalities.is_empty() && inequalities.is_empty() {
            return Err(SdpError::NoConstraints);
        }
        Ok(Self {
            dim,
            objective,
            equalities,
            inequalities,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self) -> &DMatrix<f64> {
        &self.objective
    }

    pub fn equalities(&self) -> &[SdpConstraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[SdpConstraint] {
        &self.inequalities
    }

    /// `A . Y`.
    pub fn value(&self, y: &DMatrix<f64>) -> f64 {
        self.objective.dot(y)
    }

    /// Same feasible set with the objective multiplied by `s`.
    pub fn with_objective_scaled(&self, s: f64) -> Self {
        Self {
            objective: &self.objective * s,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Target for every relative residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound on the fraction of the distance to the cone boundary
    /// taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
    NumericalFailure,
}

/// Relative primal infeasibility, dual infeasibility and duality gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal matrix.
    pub y: DMatrix<f64>,
    /// Slack `d_l - C_l . Y` of every inequality.
    pub slacks: Vec<f64>,
    /// Multipliers of the equalities.
    pub duals_eq: Vec<f64>,
    /// Multipliers of the inequalities (nonnegative).
    pub duals_ineq: Vec<f64>,
    /// Dual slack `sum lambda_j B_j + sum mu_l C_l - A`.
    pub dual_slack: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Relative duality gap after each iteration.
    pub gap_history: Vec<f64>,
}

/// Residuals of a primal-dual pair, measured on the original data.
///
/// `s` is the dual slack matrix; the dual residual is
/// `||A - sum lambda_j B_j - sum mu_l C_l + S||_F / (1 + ||A||_F)`, plus any
/// negative part of `mu`.
pub fn residuals(prob: &SdpProblem, y: &DMatrix<f64>, s: &DMatrix<f64>, duals_eq: &[f64], duals_ineq: &[f64]) -> Residuals {
    let mut primal: f64 = 0.0;
    for c in &prob.equalities {
        primal = primal.max((c.matrix.dot_dense(y) - c.rhs).abs() / (1.0 + c.rhs.abs()));
    }
    for c in &prob.inequalities {
        primal = primal.max((c.matrix.dot_dense(y) - c.rhs).max(0.0) / (1.0 + c.rhs.abs()));
    }
    let mut rd = &prob.objective + s;
    for (c, l) in prob.equalities.iter().zip(duals_eq) {
        c.matrix.add_to(&mut rd, -l);
    }
    for (c, l) in prob.inequalities.iter().zip(duals_ineq) {
        c.matrix.add_to(&mut rd, -l);
    }
    let a_norm = prob.objective.norm();
    let neg: f64 = duals_ineq.iter().map(|m| (-m).max(0.0)).sum();
    let dual = (rd.norm() + neg) / (1.0 + a_norm);
    let pobj = prob.value(y);
    let dobj: f64 = prob
        .equalities
        .iter()
        .zip(duals_eq)
        .chain(prob.inequalities.iter().zip(duals_ineq))
        .map(|(c, l)| c.rhs * l)
        .sum();
    Residuals {
        primal,
        dual,
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_constraints(n: usize) -> Vec<SdpConstraint> {
        (0..n)
            .map(|i| SdpConstraint::new(SymSparse::new(n, [(i, i, 1.0)]).unwrap(), 1.0))
            .collect()
    }

    #[test]
    fn sparse_merges_and_orients() {
        let m = SymSparse::new(3, [(2, 0, 1.0), (0, 2, 0.5), (1, 1, 2.0), (0, 0, 0.0)]).unwrap();
        assert_eq!(m.entries(), &[(0, 2, 1.5), (1, 1, 2.0)]);
        assert_eq!(m.full_nnz(), 3);
        let dense = m.to_dense();
        assert_eq!(dense[(2, 0)], 1.5);
        assert_eq!(dense[(0, 2)], 1.5);
        assert!((m.dot(&m) - dense.dot(&dense)).abs() < 1e-15);
        assert_eq!(m.dot_dense(&dense), dense.dot(&dense));
        assert!(SymSparse::new(2, [(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn problem_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(SdpProblem::new(asym, diag_constraints(2), vec![]).is_err());
        assert!(matches!(
            SdpProblem::new(DMatrix::identity(2, 2), vec![], vec![]),
            Err(SdpError::NoConstraints)
        ));
        assert!(SdpProblem::new(DMatrix::identity(2, 2), diag_constraints(3), vec![]).is_err());
    }

    #[test]
    fn residuals_at_hand_built_kkt_point() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let prob = SdpProblem::new(a.clone(), diag_constraints(2), vec![]).unwrap();
        let y = DMatrix::from_element(2, 2, 1.0);
        let s = DMatrix::identity(2, 2) - a;
        let r = residuals(&prob, &y, &s, &[1.0, 1.0], &[]);
        assert!(r.max() <= 1e-9, "{r:?}");
    }

    #[test]
    fn identity_is_primal_feasible_for_unit_diagonal() {
        let prob = SdpProblem::new(DMatrix::identity(3, 3), diag_constraints(3), vec![]).unwrap();
        let r = residuals(&prob, &DMatrix::identity(3, 3), &DMatrix::zeros(3, 3), &[0.0; 3], &[]);
        assert_eq!(r.primal, 0.0);
    }

    #[test]
    fn perturbed_rhs_shows_in_primal_residual() {
        let mut cons = diag_constraints(2);
        cons[0].rhs += 1e-3;
        let prob = SdpProblem::new(DMatrix::identity(2, 2), cons, vec![]).unwrap();
        let r = residuals(&prob, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), &[0.0; 2], &[]);
        assert!((r.primal - 1e-3 / (1.0 + 1.001)).abs() < 1e-12);
    }
}
