//! Infeasible primal-dual path following with the HKM direction.
//!
//! Internally the objective is scaled to unit Frobenius norm and every
//! constraint row to unit norm; residuals and the stopping test are always
//! evaluated on the caller's data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use crate::linalg;

use super::presolve::{independent_rows, Reduction};
use super::{residuals, SdpError, SdpOptions, SdpProblem, SdpSolution, SdpStatus, SymSparse};

const MAX_HALVINGS: usize = 30;
const SCHUR_RETRIES: usize = 3;
const DIVERGENCE: f64 = 1e10;

/// One scaled constraint row `B . X + x_slack = b`.
struct Row {
    full: Vec<(usize, usize, f64)>,
    mat: SymSparse,
    slack: Option<usize>,
    rhs: f64,
    /// Original index and the scale the row was divided by.
    origin: Origin,
    scale: f64,
    dense: bool,
}

#[derive(Clone, Copy)]
enum Origin {
    Eq(usize),
    Ineq(usize),
}

struct Iterate {
    x: DMatrix<f64>,
    xl: Vec<f64>,
    y: Vec<f64>,
    s: DMatrix<f64>,
    sl: Vec<f64>,
}

struct Direction {
    dx: DMatrix<f64>,
    dxl: Vec<f64>,
    dy: Vec<f64>,
    ds: DMatrix<f64>,
    dsl: Vec<f64>,
}

struct Workspace<'a> {
    n: usize,
    rows: Vec<Row>,
    n_slack: usize,
    a: DMatrix<f64>,
    a_scale: f64,
    prob: &'a SdpProblem,
    /// Slack of inequalities whose matrix is zero (`0 <= d`).
    trivial_ineq: Vec<usize>,
}

/// Solves `prob` from the starting point `Y = tau I`, `tau = 1 + max |b_j|`
/// (after row scaling) with dual slack `S = (1 + ||A||) I`.
///
/// Linearly dependent equalities are removed first; a dependent row with a
/// contradicting right-hand side gives status `Infeasible`. Each iteration
/// takes a Mehrotra predictor step (`sigma = 0`), sets
/// `sigma = (mu_aff / mu)^e` and solves the corrected system with the same
/// Schur factorization. The exponent is `max(1, 3 a^2)` where `a` is the
/// shorter affine step, so a blocked predictor leads to more centering. Step
/// lengths are `min(step_fraction, 0.9 + 0.09 a)` times the distance to the
/// boundary, confirmed by a Cholesky test and halved on failure.
pub fn solve(prob: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    if !(opts.tol > 0.0) || !(opts.step_fraction > 0.0 && opts.step_fraction < 1.0) || opts.max_iter == 0 {
        return Err(SdpError::InvalidProblem(
            "options need tol > 0, 0 < step_fraction < 1 and max_iter >= 1".into(),
        ));
    }
    let n = prob.dim();
    let eq_mats: Vec<&SymSparse> = prob.equalities().iter().map(|c| &c.matrix).collect();
    let eq_rhs: Vec<f64> = prob.equalities().iter().map(|c| c.rhs).collect();
    let keep = match independent_rows(&eq_mats, &eq_rhs) {
        Reduction::Keep(k) => k,
        Reduction::Inconsistent => return Ok(trivial_solution(prob, SdpStatus::Infeasible)),
    };

    let mut rows = Vec::new();
    for j in keep {
        let c = &prob.equalities()[j];
        let scale = c.matrix.frobenius();
        rows.push(make_row(&c.matrix, c.rhs, scale, None, Origin::Eq(j), n));
    }
    let mut n_slack = 0;
    let mut trivial_ineq = Vec::new();
    for (l, c) in prob.inequalities().iter().enumerate() {
        let scale = c.matrix.frobenius();
        if scale == 0.0 {
            if c.rhs < 0.0 {
                return Ok(trivial_solution(prob, SdpStatus::Infeasible));
            }
            trivial_ineq.push(l);
            continue;
        }
        rows.push(make_row(&c.matrix, c.rhs, scale, Some(n_slack), Origin::Ineq(l), n));
        n_slack += 1;
    }
    if rows.is_empty() {
        // no effective constraint: bounded only if A is negative semidefinite
        let status = if linalg::sym_eigenvalues(prob.objective()).and_then(|e| e.last().copied()).unwrap_or(f64::INFINITY) > 0.0 {
            SdpStatus::Unbounded
        } else {
            SdpStatus::Optimal
        };
        return Ok(trivial_solution(prob, status));
    }

    let a_norm = prob.objective().norm();
    let a_scale = if a_norm > 0.0 { a_norm } else { 1.0 };
    let ws = Workspace {
        n,
        a: prob.objective() / a_scale,
        a_scale,
        rows,
        n_slack,
        prob,
        trivial_ineq,
    };
    Ok(ws.run(opts))
}

fn make_row(mat: &SymSparse, rhs: f64, scale: f64, slack: Option<usize>, origin: Origin, n: usize) -> Row {
    let mat = mat.scaled(1.0 / scale);
    let full = mat.full_entries();
    let dense = full.len() > 4 * n;
    Row {
        full,
        mat,
        slack,
        rhs: rhs / scale,
        origin,
        scale,
        dense,
    }
}

fn trivial_solution(prob: &SdpProblem, status: SdpStatus) -> SdpSolution {
    let n = prob.dim();
    let y = DMatrix::zeros(n, n);
    let neq = prob.equalities().len();
    let nin = prob.inequalities().len();
    let s = -prob.objective();
    let res = residuals(prob, &y, &s, &vec![0.0; neq], &vec![0.0; nin]);
    SdpSolution {
        status,
        slacks: prob.inequalities().iter().map(|c| c.rhs).collect(),
        y,
        duals_eq: vec![0.0; neq],
        duals_ineq: vec![0.0; nin],
        dual_slack: s,
        primal_objective: 0.0,
        dual_objective: 0.0,
        residuals: res,
        iterations: 0,
        gap_history: Vec::new(),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `tr(B G)` with `B` given by its full entry list.
fn trace_prod(full: &[(usize, usize, f64)], g: &DMatrix<f64>) -> f64 {
    full.iter().map(|&(p, q, v)| v * g[(q, p)]).sum()
}

/// Largest step `alpha` keeping `x + alpha d` positive definite, from the
/// eigenvalues of `L^-1 d L^-T` where `x = L L'`.
fn max_psd_step(l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let t = l.solve_lower_triangular(d).expect("Cholesky factor is invertible");
    let mut w = l
        .solve_lower_triangular(&t.transpose())
        .expect("Cholesky factor is invertible");
    symmetrize(&mut w);
    // an eigen failure means no trustworthy bound; the Cholesky test decides
    let Some(lmin) = linalg::sym_eigenvalues(&w).and_then(|e| e.first().copied()) else {
        return 1.0;
    };
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_lp_step(v: &[f64], d: &[f64]) -> f64 {
    v.iter()
        .zip(d)
        .filter(|(_, di)| **di < 0.0)
        .map(|(vi, di)| -vi / di)
        .fold(f64::INFINITY, f64::min)
}

impl Workspace<'_> {
    fn dot_a(&self, m: &DMatrix<f64>) -> f64 {
        self.a.dot(m)
    }

    /// Maps the scaled iterate back to the caller's data.
    fn unscale(&self, it: &Iterate) -> (Vec<f64>, Vec<f64>, Vec<f64>, DMatrix<f64>) {
        let mut duals_eq = vec![0.0; self.prob.equalities().len()];
        let mut duals_ineq = vec![0.0; self.prob.inequalities().len()];
        let mut slacks: Vec<f64> = self.prob.inequalities().iter().map(|c| c.rhs).collect();
        for (row, y) in self.rows.iter().zip(&it.y) {
            let lambda = self.a_scale * y / row.scale;
            match row.origin {
                Origin::Eq(j) => duals_eq[j] = lambda,
                Origin::Ineq(l) => {
                    duals_ineq[l] = lambda;
                    slacks[l] = row.scale * it.xl[row.slack.unwrap()];
                }
            }
        }
        for &l in &self.trivial_ineq {
            slacks[l] = self.prob.inequalities()[l].rhs;
        }
        (duals_eq, duals_ineq, slacks, &it.s * self.a_scale)
    }

    fn solution(&self, it: &Iterate, status: SdpStatus, iterations: usize, gap_history: Vec<f64>) -> SdpSolution {
        let (duals_eq, duals_ineq, slacks, s) = self.unscale(it);
        let res = residuals(self.prob, &it.x, &s, &duals_eq, &duals_ineq);
        let dual_objective = self
            .prob
            .equalities()
            .iter()
            .zip(&duals_eq)
            .chain(self.prob.inequalities().iter().zip(&duals_ineq))
            .map(|(c, l)| c.rhs * l)
            .sum();
        SdpSolution {
            status,
            primal_objective: self.prob.value(&it.x),
            dual_objective,
            y: it.x.clone(),
            slacks,
            duals_eq,
            duals_ineq,
            dual_slack: s,
            residuals: res,
            iterations,
            gap_history,
        }
    }

    /// `A - sum y_i B_i + S` and the slack-block counterpart `s - y_row`.
    fn dual_residual(&self, it: &Iterate) -> (DMatrix<f64>, Vec<f64>) {
        let mut rd = &self.a + &it.s;
        let mut rl = it.sl.clone();
        for (row, y) in self.rows.iter().zip(&it.y) {
            row.mat.add_to(&mut rd, -y);
            if let Some(l) = row.slack {
                rl[l] -= y;
            }
        }
        (rd, rl)
    }

    fn schur(&self, x: &DMatrix<f64>, z: &DMatrix<f64>, it: &Iterate) -> DMatrix<f64> {
        let m = self.rows.len();
        let n = self.n;
        let xs = x.as_slice();
        let zs = z.as_slice();
        let dense_prod: Vec<Option<DMatrix<f64>>> = self
            .rows
            .par_iter()
            .map(|r| r.dense.then(|| x * r.mat.to_dense() * z))
            .collect();
        let upper: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let bi = &self.rows[i];
                (i..m)
                    .map(|j| {
                        let bj = &self.rows[j];
                        let mut v = if let Some(p) = &dense_prod[j] {
                            trace_prod(&bi.full, p)
                        } else if let Some(p) = &dense_prod[i] {
                            trace_prod(&bj.full, p)
                        } else {
                            let mut acc = 0.0;
                            for &(p, q, vi) in &bi.full {
                                let mut inner = 0.0;
                                for &(r, s, wj) in &bj.full {
                                    inner += wj * xs[q + r * n] * zs[s + p * n];
                                }
                                acc += vi * inner;
                            }
                            acc
                        };
                        if let (Some(li), Some(lj)) = (bi.slack, bj.slack) {
                            if li == lj {
                                v += it.xl[li] / it.sl[li];
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let mut out = DMatrix::zeros(m, m);
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                out[(i, i + off)] = v;
                out[(i + off, i)] = v;
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        it: &Iterate,
        z: &DMatrix<f64>,
        x_rd_z: &DMatrix<f64>,
        rd: &DMatrix<f64>,
        rl: &[f64],
        rp: &[f64],
        target: f64,
        corr: Option<&Direction>,
    ) -> Direction {
        let mut g = z * target - &it.x + x_rd_z;
        let mut corr_l = vec![0.0; self.n_slack];
        if let Some(c) = corr {
            g -= &c.dx * &c.ds * z;
            for l in 0..self.n_slack {
                corr_l[l] = c.dxl[l] * c.dsl[l];
            }
        }
        let h = DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().zip(rp).map(|(row, rpi)| {
                let mut v = trace_prod(&row.full, &g) - rpi;
                if let Some(l) = row.slack {
                    let (x, s) = (it.xl[l], it.sl[l]);
                    v += target / s - x + x * rl[l] / s - corr_l[l] / s;
                }
                v
            }),
        );
        let dy = chol.solve(&h);
        let mut ds = -rd.clone();
        let mut dsl: Vec<f64> = rl.iter().map(|v| -v).collect();
        for (row, d) in self.rows.iter().zip(dy.iter()) {
            row.mat.add_to(&mut ds, *d);
            if let Some(l) = row.slack {
                dsl[l] += d;
            }
        }
        // X (sum dy B) Z = X dS Z + X Rd Z
        let mut dx = g - &it.x * &ds * z - x_rd_z;
        symmetrize(&mut dx);
        let dxl = (0..self.n_slack)
            .map(|l| {
                let (x, s) = (it.xl[l], it.sl[l]);
                target / s - x - x * dsl[l] / s - corr_l[l] / s
            })
            .collect();
        Direction {
            dx,
            dxl,
            dy: dy.iter().copied().collect(),
            ds,
            dsl,
        }
    }

    /// Step along `d` from `v` (PD) and `vl` (positive), shortened until the
    /// Cholesky test passes.
    fn step(&self, v: &DMatrix<f64>, lv: &DMatrix<f64>, vl: &[f64], d: &DMatrix<f64>, dl: &[f64], frac: f64) -> f64 {
        let amax = max_psd_step(lv, d).min(max_lp_step(vl, dl));
        let mut alpha = if amax.is_finite() { (frac * amax).min(1.0) } else { 1.0 };
        for _ in 0..MAX_HALVINGS {
            let trial = v + d * alpha;
            let lp_ok = vl.iter().zip(dl).all(|(a, b)| a + alpha * b > 0.0);
            if lp_ok && trial.cholesky().is_some() {
                return alpha;
            }
            alpha *= 0.5;
        }
        0.0
    }

    fn run(&self, opts: &SdpOptions) -> SdpSolution {
        let n = self.n;
        let tau = 1.0 + self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let omega = 1.0 + self.a.norm();
        let mut it = Iterate {
            x: DMatrix::identity(n, n) * tau,
            xl: vec![tau; self.n_slack],
            y: vec![0.0; self.rows.len()],
            s: DMatrix::identity(n, n) * omega,
            sl: vec![omega; self.n_slack],
        };
        let mut gap_history = Vec::new();
        let dim_total = (n + self.n_slack) as f64;

        for iter in 0..opts.max_iter {
            let (duals_eq, duals_ineq, _, s_orig) = self.unscale(&it);
            let res = residuals(self.prob, &it.x, &s_orig, &duals_eq, &duals_ineq);
            if iter > 0 {
                gap_history.push(res.gap);
            }
            if res.max() <= opts.tol {
                return self.solution(&it, SdpStatus::Optimal, iter, gap_history);
            }
            if let Some(status) = self.divergence(&it) {
                return self.solution(&it, status, iter, gap_history);
            }

            let (Some(xchol), Some(schol)) = (it.x.clone().cholesky(), it.s.clone().cholesky()) else {
                return self.solution(&it, SdpStatus::NumericalFailure, iter, gap_history);
            };
            let z = schol.inverse();
            let lx = xchol.l();
            let ls = schol.l();
            let (rd, rl) = self.dual_residual(&it);
            let rp: Vec<f64> = self
                .rows
                .iter()
                .map(|row| row.rhs - row.mat.dot_dense(&it.x) - row.slack.map_or(0.0, |l| it.xl[l]))
                .collect();
            let mu = (it.x.dot(&it.s) + it.xl.iter().zip(&it.sl).map(|(a, b)| a * b).sum::<f64>()) / dim_total;
            let x_rd_z = &it.x * &rd * &z;

            let m = self.schur(&it.x, &z, &it);
            let Some(chol) = factor_with_boost(m) else {
                return self.solution(&it, SdpStatus::NumericalFailure, iter, gap_history);
            };

            let pred = self.direction(&chol, &it, &z, &x_rd_z, &rd, &rl, &rp, 0.0, None);
            let ap = self.step(&it.x, &lx, &it.xl, &pred.dx, &pred.dxl, 1.0);
            let ad = self.step(&it.s, &ls, &it.sl, &pred.ds, &pred.dsl, 1.0);
            let x_aff = &it.x + &pred.dx * ap;
            let s_aff = &it.s + &pred.ds * ad;
            let lp_aff: f64 = (0..self.n_slack)
                .map(|l| (it.xl[l] + ap * pred.dxl[l]) * (it.sl[l] + ad * pred.dsl[l]))
                .sum();
            let mu_aff = (x_aff.dot(&s_aff) + lp_aff) / dim_total;
            // more centering when the affine step is blocked early
            let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powf(expon);
            let frac = opts.step_fraction.min(0.9 + 0.09 * ap.min(ad));

            let dir = self.direction(&chol, &it, &z, &x_rd_z, &rd, &rl, &rp, sigma * mu, Some(&pred));
            let ap = self.step(&it.x, &lx, &it.xl, &dir.dx, &dir.dxl, frac);
            let ad = self.step(&it.s, &ls, &it.sl, &dir.ds, &dir.dsl, frac);
            if ap == 0.0 && ad == 0.0 {
                return self.solution(&it, SdpStatus::NumericalFailure, iter, gap_history);
            }
            it.x += &dir.dx * ap;
            symmetrize(&mut it.x);
            for l in 0..self.n_slack {
                it.xl[l] += ap * dir.dxl[l];
                it.sl[l] += ad * dir.dsl[l];
            }
            it.s += &dir.ds * ad;
            symmetrize(&mut it.s);
            for (y, d) in it.y.iter_mut().zip(&dir.dy) {
                *y += ad * d;
            }
        }
        let (duals_eq, duals_ineq, _, s_orig) = self.unscale(&it);
        let res = residuals(self.prob, &it.x, &s_orig, &duals_eq, &duals_ineq);
        gap_history.push(res.gap);
        let status = if res.max() <= opts.tol {
            SdpStatus::Optimal
        } else {
            SdpStatus::IterLimit
        };
        self.solution(&it, status, opts.max_iter, gap_history)
    }

    /// Ray detection on the scaled iterate: a dual objective running to
    /// minus infinity certifies primal infeasibility, a primal objective
    /// running to plus infinity certifies unboundedness.
    fn divergence(&self, it: &Iterate) -> Option<SdpStatus> {
        let dobj: f64 = self.rows.iter().zip(&it.y).map(|(r, y)| r.rhs * y).sum();
        let ynorm = it.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ynorm > DIVERGENCE && -dobj > 1e-3 * ynorm {
            return Some(SdpStatus::Infeasible);
        }
        let tr = it.x.trace();
        if tr > DIVERGENCE && self.dot_a(&it.x) > 1e-3 * tr {
            return Some(SdpStatus::Unbounded);
        }
        None
    }
}

/// Cholesky of the Schur complement, retried with growing diagonal boosts.
fn factor_with_boost(m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let dmax = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut boost = 1e-12 * dmax;
    for _ in 0..SCHUR_RETRIES {
        let mut b = m.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += boost;
        }
        if let Some(c) = b.cholesky() {
            return Some(c);
        }
        boost *= 1e3;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpsolver::SdpConstraint;

    fn diag_constraints(n: usize) -> Vec<SdpConstraint> {
        (0..n)
            .map(|i| SdpConstraint::new(SymSparse::new(n, [(i, i, 1.0)]).unwrap(), 1.0))
            .collect()
    }

    #[test]
    fn trace_objective_with_unit_diagonal() {
        let prob = SdpProblem::new(DMatrix::identity(2, 2), diag_constraints(2), vec![]).unwrap();
        let sol = solve(&prob, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn off_diagonal_objective() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let prob = SdpProblem::new(a, diag_constraints(2), vec![]).unwrap();
        let sol = solve(&prob, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 2.0).abs() < 1e-6);
        assert!((sol.y[(0, 1)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn inequality_slack_block() {
        // max y01 s.t. diag = 1, y01 <= 0.5
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let ineq = SdpConstraint::new(SymSparse::new(2, [(0, 1, 0.5)]).unwrap(), 0.5);
        let prob = SdpProblem::new(a, diag_constraints(2), vec![ineq]).unwrap();
        let sol = solve(&prob, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "{:?}", sol.residuals);
        assert!((sol.primal_objective - 0.5).abs() < 1e-6);
        assert!(sol.duals_ineq[0] > 0.0);
        assert!(sol.slacks[0].abs() < 1e-5);
    }

    #[test]
    fn duplicated_constraint_is_presolved() {
        let mut cons = diag_constraints(2);
        cons.push(SdpConstraint::new(SymSparse::new(2, [(0, 0, 3.0)]).unwrap(), 3.0));
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let prob = SdpProblem::new(a.clone(), cons.clone(), vec![]).unwrap();
        let sol = solve(&prob, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        cons[2].rhs = 2.0;
        let bad = SdpProblem::new(a, cons, vec![]).unwrap();
        assert_eq!(solve(&bad, &SdpOptions::default()).unwrap().status, SdpStatus::Infeasible);
    }

    #[test]
    fn rejects_bad_options() {
        let prob = SdpProblem::new(DMatrix::identity(1, 1), diag_constraints(1), vec![]).unwrap();
        let opts = SdpOptions {
            tol: 0.0,
            ..SdpOptions::default()
        };
        assert!(solve(&prob, &opts).is_err());
    }
}
