//! Restriction of the lifted SDP to the face its constraints force.
//!
//! Every lifted point `Y = x x'` with `x = (1, 2z - 1)` satisfies `v' x = 0`
//! for `v = (-(2 - |I_m|), 1_{I_m})`, and likewise `v = (-beta, a)` for an
//! equality `a' t = beta`. Hence `Y v = 0` on the whole feasible set and the
//! SDP has no interior point. Writing `Y = U W U'` with the columns of `U`
//! spanning the complement of those vectors gives an equivalent problem in
//! `W` that does.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::sdpsolver::{SdpConstraint, SdpError, SdpProblem, SymSparse};

const PIVOT_TOL: f64 = 1e-10;

/// Sparse basis `U` (`dim x reduced`), stored by rows.
#[derive(Debug, Clone)]
pub struct Face {
    rows: Vec<Vec<(usize, f64)>>,
    reduced: usize,
}

impl Face {
    /// Basis of `{x : v' x = 0 for all v in null}` by reduced row echelon
    /// elimination, pivoting on columns from the last to the first so that
    /// block-structured vectors eliminate one variable per block.
    pub fn new(dim: usize, null: &[Vec<f64>]) -> Self {
        let mut v: Vec<Vec<f64>> = null.to_vec();
        let mut used = vec![false; v.len()];
        // pivot column -> row
        let mut pivots: Vec<(usize, usize)> = Vec::new();
        for col in (0..dim).rev() {
            let best = (0..v.len())
                .filter(|&r| !used[r])
                .map(|r| (r, v[r][col].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((r, mag)) = best else { break };
            let scale = v[r].iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if mag <= PIVOT_TOL * scale.max(1.0) {
                continue;
            }
            used[r] = true;
            let p = v[r][col];
            for x in v[r].iter_mut() {
                *x /= p;
            }
            let pivot_row = v[r].clone();
            for (o, row) in v.iter_mut().enumerate() {
                if o != r && row[col] != 0.0 {
                    let f = row[col];
                    for (x, pv) in row.iter_mut().zip(&pivot_row) {
                        *x -= f * pv;
                    }
                    row[col] = 0.0;
                }
            }
            pivots.push((col, r));
        }
        let pivot_of: HashMap<usize, usize> = pivots.iter().copied().collect();
        let free: Vec<usize> = (0..dim).filter(|c| !pivot_of.contains_key(c)).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for (j, &f) in free.iter().enumerate() {
            rows[f].push((j, 1.0));
        }
        for &(col, r) in &pivots {
            // x_col = -sum_{free f} v[r][f] x_f
            rows[col] = free
                .iter()
                .enumerate()
                .filter(|(_, &f)| v[r][f].abs() > PIVOT_TOL)
                .map(|(j, &f)| (j, -v[r][f]))
                .collect();
        }
        Self {
            rows,
            reduced: free.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced
    }

    pub fn basis(&self) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.dim(), self.reduced);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                u[(i, j)] = v;
            }
        }
        u
    }

    /// `U' B U`.
    pub fn restrict_sparse(&self, b: &SymSparse) -> Result<SymSparse, SdpError> {
        let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
        for (p, q, v) in b.full_entries() {
            for &(a, ua) in &self.rows[p] {
                for &(c, uc) in &self.rows[q] {
                    if a <= c {
                        *acc.entry((a, c)).or_insert(0.0) += v * ua * uc;
                    }
                }
            }
        }
        let mut trip: Vec<(usize, usize, f64)> = acc.into_iter().map(|((a, c), v)| (a, c, v)).collect();
        trip.sort_by_key(|x| (x.0, x.1));
        // drop cancellation noise relative to the row size
        let scale = trip.iter().fold(0.0f64, |m, t| m.max(t.2.abs()));
        trip.retain(|t| t.2.abs() > 1e-14 * scale);
        SymSparse::new(self.reduced, trip)
    }

    /// The problem in `W`, with `A . Y = (U' A U) . W`.
    pub fn restrict(&self, prob: &SdpProblem) -> Result<SdpProblem, SdpError> {
        let u = self.basis();
        let a = u.transpose() * prob.objective() * &u;
        let a = (&a + a.transpose()) * 0.5;
        let map = |cs: &[SdpConstraint]| -> Result<Vec<SdpConstraint>, SdpError> {
            cs.iter()
                .map(|c| Ok(SdpConstraint::new(self.restrict_sparse(&c.matrix)?, c.rhs)))
                .collect()
        };
        SdpProblem::new(a, map(prob.equalities())?, map(prob.inequalities())?)
    }

    /// `U W U'`.
    pub fn expand(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let u = self.basis();
        let mut y = &u * w * u.transpose();
        let n = y.nrows();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (y[(i, j)] + y[(j, i)]);
                y[(i, j)] = v;
                y[(j, i)] = v;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_vectors_eliminate_last_member() {
        // x0, block {1,2,3}: v = (1, 1, 1, 1) for K = 3 (-(2-3) = 1)
        let face = Face::new(4, &[vec![1.0, 1.0, 1.0, 1.0]]);
        assert_eq!(face.reduced_dim(), 3);
        let u = face.basis();
        // x3 = -x0 - x1 - x2
        assert_eq!(u.row(3).iter().copied().collect::<Vec<_>>(), vec![-1.0, -1.0, -1.0]);
        let v = nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        assert!((u.transpose() * v).amax() < 1e-15);
    }

    #[test]
    fn contradictory_vectors_zero_out_x0() {
        let face = Face::new(3, &[vec![0.0, 1.0, 1.0], vec![-2.0, 1.0, 1.0]]);
        assert_eq!(face.reduced_dim(), 1);
        assert!(face.basis().row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn restrict_matches_dense_product() {
        let face = Face::new(4, &[vec![1.0, 1.0, 1.0, 1.0]]);
        let b = SymSparse::new(4, [(0, 3, 0.5), (3, 3, 2.0), (1, 2, -1.0)]).unwrap();
        let u = face.basis();
        let dense = u.transpose() * b.to_dense() * &u;
        let sparse = face.restrict_sparse(&b).unwrap().to_dense();
        assert!((dense - sparse).amax() < 1e-14);
    }
}
