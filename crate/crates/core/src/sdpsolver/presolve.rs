//! Removal of linearly dependent equality constraints.

use nalgebra::DMatrix;

use super::SymSparse;

const DEPENDENCE_TOL: f64 = 1e-9;
const CONSISTENCY_TOL: f64 = 1e-7;

pub(super) enum Reduction {
    /// Indices of a maximal independent subset, in input order.
    Keep(Vec<usize>),
    /// A dependent row whose right-hand side contradicts the others.
    Inconsistent,
}

/// Pivoted Cholesky on the Gram matrix `<B_i, B_j>` of the normalized rows.
pub(super) fn independent_rows(mats: &[&SymSparse], rhs: &[f64]) -> Reduction {
    let m = mats.len();
    let norms: Vec<f64> = mats.iter().map(|b| b.frobenius()).collect();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        if norms[i] == 0.0 {
            continue;
        }
        for j in i..m {
            if norms[j] == 0.0 {
                continue;
            }
            let g = mats[i].dot(mats[j]) / (norms[i] * norms[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let b: Vec<f64> = rhs
        .iter()
        .zip(&norms)
        .map(|(r, n)| if *n == 0.0 { *r } else { r / n })
        .collect();

    let mut perm: Vec<usize> = (0..m).collect();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut diag: Vec<f64> = (0..m).map(|i| gram[(i, i)]).collect();
    let mut rank = 0;
    while rank < m {
        let (best, &dmax) = perm[rank..]
            .iter()
            .map(|&p| &diag[p])
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        if dmax <= DEPENDENCE_TOL {
            break;
        }
        perm.swap(rank, rank + best);
        let p = perm[rank];
        let piv = dmax.sqrt();
        l[(p, rank)] = piv;
        for &q in &perm[rank + 1..] {
            let mut v = gram[(q, p)];
            for c in 0..rank {
                v -= l[(q, c)] * l[(p, c)];
            }
            let v = v / piv;
            l[(q, rank)] = v;
            diag[q] -= v * v;
        }
        rank += 1;
    }

    // dependent row q: B_q = sum_c L[q,c] e_c in the orthonormal basis, so the
    // right-hand side must satisfy the same combination.
    if rank < m {
        let mut coords = vec![0.0; rank];
        for c in 0..rank {
            let p = perm[c];
            let mut v = b[p];
            for k in 0..c {
                v -= l[(p, k)] * coords[k];
            }
            coords[c] = v / l[(p, c)];
        }
        for &q in &perm[rank..] {
            let implied: f64 = (0..rank).map(|c| l[(q, c)] * coords[c]).sum();
            if (implied - b[q]).abs() > CONSISTENCY_TOL * (1.0 + b[q].abs()) {
                return Reduction::Inconsistent;
            }
        }
    }
    let mut keep: Vec<usize> = perm[..rank].to_vec();
    keep.sort_unstable();
    Reduction::Keep(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, i: usize, j: usize) -> SymSparse {
        SymSparse::new(n, [(i, j, 1.0)]).unwrap()
    }

    #[test]
    fn drops_scaled_duplicate() {
        let a = unit(3, 0, 0);
        let b = unit(3, 1, 1);
        let c = a.scaled(4.0);
        match independent_rows(&[&a, &b, &c], &[1.0, 1.0, 4.0]) {
            Reduction::Keep(k) => assert_eq!(k.len(), 2),
            Reduction::Inconsistent => panic!("consistent system flagged"),
        }
    }

    #[test]
    fn flags_contradiction() {
        let a = unit(2, 0, 0);
        let c = a.scaled(2.0);
        assert!(matches!(independent_rows(&[&a, &c], &[1.0, 3.0]), Reduction::Inconsistent));
    }

    #[test]
    fn zero_row_needs_zero_rhs() {
        let a = unit(2, 0, 1);
        let z = SymSparse::new(2, []).unwrap();
        assert!(matches!(independent_rows(&[&a, &z], &[0.5, 0.0]), Reduction::Keep(k) if k == vec![0]));
        assert!(matches!(independent_rows(&[&a, &z], &[0.5, 1.0]), Reduction::Inconsistent));
    }

    #[test]
    fn sum_of_rows_is_dependent() {
        let a = unit(3, 0, 0);
        let b = unit(3, 1, 2);
        let s = SymSparse::new(3, [(0, 0, 1.0), (1, 2, 1.0)]).unwrap();
        match independent_rows(&[&a, &b, &s], &[1.0, 0.25, 1.25]) {
            Reduction::Keep(k) => assert_eq!(k.len(), 2),
            Reduction::Inconsistent => panic!(),
        }
        assert!(matches!(independent_rows(&[&a, &b, &s], &[1.0, 0.25, 1.5]), Reduction::Inconsistent));
    }
}
