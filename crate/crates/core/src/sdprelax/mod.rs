//! Semidefinite relaxation of a [`BqpProblem`] and rounding back to prices.
//!
//! With `t = 2z - 1` and `x = (1, t)`, the objective becomes `x' A x` for
//!
//! ```text
//! A = 1/4 [ 1'Q1 + 2 r'1   (r + Q1)' ]
//!         [ r + Q1          Q        ]      (Q symmetrized)
//! ```
//!
//! and replacing `x x'` by a PSD matrix `Y` with unit diagonal gives an upper
//! bound `g(Y) = A . Y`. Row/column 0 of `Y` belongs to `x_0`; row `i + 1`
//! belongs to `z_i`.
//!
//! A one-of-K block `I` becomes `sum_{i in I} y_0i = 2 - |I|` together with
//! its square `sum_{i,j in I} y_ij = (2 - |I|)^2`. Side equalities `a'z = b`
//! are encoded the same way with `beta = 2b - 1'a`; inequalities `c'z <= d`
//! only through the linear form `sum c_i y_0i <= 2d - 1'c`, since squaring is
//! not valid for them.

mod face;
mod rounding;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bqp::{BqpError, BqpProblem};
use crate::sdpsolver::{self, SdpConstraint, SdpError, SdpOptions, SdpProblem, SdpStatus, SymSparse};

pub use face::Face;
pub use rounding::{
    certificate, round_deterministic, round_randomized, round_simple, Certificate, RandomizedOptions,
    RoundingMethod, RoundingResult,
};

/// Default candidate budget of the deterministic search.
pub const DEFAULT_T_SEARCH: usize = 1000;

#[derive(Debug, Error)]
pub enum RoundingError {
    #[error("SDP solve failed with status {0:?}")]
    SdpSolveFailure(SdpStatus),
    #[error("no feasible rounding found")]
    NoFeasibleFound,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Bqp(#[from] BqpError),
}

/// The relaxation of a BQP as an SDP over `(n+1) x (n+1)` matrices.
#[derive(Debug, Clone)]
pub struct LiftedSdp {
    n_vars: usize,
    problem: SdpProblem,
    /// Vectors `v` with `Y v = 0` for every lifted feasible point.
    null_vectors: Vec<Vec<f64>>,
}

impl LiftedSdp {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn dim(&self) -> usize {
        self.n_vars + 1
    }

    pub fn objective(&self) -> &DMatrix<f64> {
        self.problem.objective()
    }

    pub fn problem(&self) -> &SdpProblem {
        &self.problem
    }

    pub fn null_vectors(&self) -> &[Vec<f64>] {
        &self.null_vectors
    }

    /// `g(Y) = A . Y`.
    pub fn value(&self, y: &DMatrix<f64>) -> f64 {
        self.problem.value(y)
    }

    /// Rank-one lift `x x'` of a binary point, `x = (1, 2z - 1)`.
    pub fn lift_point(z: &[u8]) -> DMatrix<f64> {
        let x = nalgebra::DVector::from_iterator(
            z.len() + 1,
            std::iter::once(1.0).chain(z.iter().map(|&v| if v != 0 { 1.0 } else { -1.0 })),
        );
        &x * x.transpose()
    }
}

fn linear_row(dim: usize, coeffs: impl Iterator<Item = (usize, f64)>) -> SymSparse {
    SymSparse::new(dim, coeffs.map(|(i, c)| (0, i + 1, 0.5 * c))).expect("indices in range")
}

fn squared_row(dim: usize, coeffs: &[(usize, f64)]) -> SymSparse {
    let mut trip = Vec::with_capacity(coeffs.len() * (coeffs.len() + 1) / 2);
    for (p, &(i, a)) in coeffs.iter().enumerate() {
        for &(j, b) in &coeffs[p..] {
            trip.push((i + 1, j + 1, a * b));
        }
    }
    SymSparse::new(dim, trip).expect("indices in range")
}

/// Builds the objective matrix and trace constraints of the relaxation.
pub fn lift(prob: &BqpProblem) -> LiftedSdp {
    let n = prob.n();
    let dim = n + 1;
    let sym = prob.symmetrized();
    let q = sym.q();
    let r = sym.r();
    let q1: Vec<f64> = (0..n).map(|i| q[i * n..(i + 1) * n].iter().sum()).collect();
    let mut a = DMatrix::zeros(dim, dim);
    a[(0, 0)] = 0.25 * (q1.iter().sum::<f64>() + 2.0 * r.iter().sum::<f64>());
    for i in 0..n {
        let v = 0.25 * (r[i] + q1[i]);
        a[(0, i + 1)] = v;
        a[(i + 1, 0)] = v;
        for j in 0..n {
            a[(i + 1, j + 1)] = 0.25 * q[i * n + j];
        }
    }

    let mut eqs: Vec<SdpConstraint> = (0..dim)
        .map(|i| SdpConstraint::new(SymSparse::new(dim, [(i, i, 1.0)]).unwrap(), 1.0))
        .collect();
    let mut null_vectors = Vec::new();
    for block in prob.partition() {
        let c = 2.0 - block.len() as f64;
        let ones: Vec<(usize, f64)> = block.iter().map(|&i| (i, 1.0)).collect();
        eqs.push(SdpConstraint::new(linear_row(dim, ones.iter().copied()), c));
        eqs.push(SdpConstraint::new(squared_row(dim, &ones), c * c));
        let mut v = vec![0.0; dim];
        v[0] = -c;
        for &i in block {
            v[i + 1] = 1.0;
        }
        null_vectors.push(v);
    }
    for e in prob.equalities() {
        let beta = 2.0 * e.rhs - e.coeffs.iter().sum::<f64>();
        let nz: Vec<(usize, f64)> = e.coeffs.iter().copied().enumerate().filter(|(_, c)| *c != 0.0).collect();
        eqs.push(SdpConstraint::new(linear_row(dim, nz.iter().copied()), beta));
        eqs.push(SdpConstraint::new(squared_row(dim, &nz), beta * beta));
        let mut v = vec![-beta];
        v.extend_from_slice(&e.coeffs);
        null_vectors.push(v);
    }
    let ineqs: Vec<SdpConstraint> = prob
        .inequalities()
        .iter()
        .map(|c| {
            let rhs = 2.0 * c.rhs - c.coeffs.iter().sum::<f64>();
            let nz = c.coeffs.iter().copied().enumerate().filter(|(_, v)| *v != 0.0);
            SdpConstraint::new(linear_row(dim, nz), rhs)
        })
        .collect();
    let problem = SdpProblem::new(a, eqs, ineqs).expect("lifted problem is well formed");
    LiftedSdp {
        n_vars: n,
        problem,
        null_vectors,
    }
}

/// Solved relaxation.
#[derive(Debug, Clone)]
pub struct Relaxation {
    /// `Y` in the lifted coordinates.
    pub y: DMatrix<f64>,
    /// `g(Y) = A . Y`, an upper bound on the BQP optimum.
    pub value: f64,
    /// Dual objective at termination; not below `value` up to the tolerance.
    pub dual_value: f64,
    pub iterations: usize,
    pub residuals: sdpsolver::Residuals,
    pub gap_history: Vec<f64>,
}

impl Relaxation {
    /// `y_0i` for every BQP variable.
    pub fn y0(&self) -> Vec<f64> {
        (1..self.y.nrows()).map(|i| self.y[(0, i)]).collect()
    }
}

/// Lifts `prob`, restricts it to its forced face, solves it and maps the
/// optimum back to `Y`.
pub fn relax_and_solve(prob: &BqpProblem, opts: &SdpOptions) -> Result<Relaxation, RoundingError> {
    let lifted = lift(prob);
    solve_lifted(&lifted, opts)
}

pub fn solve_lifted(lifted: &LiftedSdp, opts: &SdpOptions) -> Result<Relaxation, RoundingError> {
    let face = Face::new(lifted.dim(), lifted.null_vectors());
    if face.reduced_dim() == 0 {
        return Err(RoundingError::SdpSolveFailure(SdpStatus::Infeasible));
    }
    let reduced = face.restrict(lifted.problem())?;
    let sol = sdpsolver::solve(&reduced, opts)?;
    if sol.status != SdpStatus::Optimal {
        return Err(RoundingError::SdpSolveFailure(sol.status));
    }
    let y = face.expand(&sol.y);
    Ok(Relaxation {
        value: lifted.value(&y),
        dual_value: sol.dual_objective,
        y,
        iterations: sol.iterations,
        residuals: sol.residuals,
        gap_history: sol.gap_history,
    })
}

/// Settings for [`solve_bqp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub sdp: SdpOptions,
    pub t_search: usize,
    pub randomized: RandomizedOptions,
    /// Use randomized rounding when the deterministic search finds nothing.
    pub fallback: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            sdp: SdpOptions::default(),
            t_search: DEFAULT_T_SEARCH,
            randomized: RandomizedOptions::default(),
            fallback: true,
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub lift: f64,
    pub sdp: f64,
    pub rounding: f64,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub rounding: RoundingResult,
    pub relaxation: Relaxation,
    pub timings: Timings,
}

/// Relaxation followed by deterministic search rounding, falling back to the
/// randomized search if the candidate set holds no feasible point.
pub fn solve_bqp(prob: &BqpProblem, opts: &SolveOptions) -> Result<Solved, RoundingError> {
    let t0 = Instant::now();
    let lifted = lift(prob);
    let t1 = Instant::now();
    let relaxation = solve_lifted(&lifted, &opts.sdp)?;
    let t2 = Instant::now();
    let rounding = match round_deterministic(&relaxation.y, prob, opts.t_search, relaxation.value) {
        Err(RoundingError::NoFeasibleFound) if opts.fallback => {
            round_randomized(&relaxation.y, prob, &opts.randomized, relaxation.value)?
        }
        other => other?,
    };
    let t3 = Instant::now();
    Ok(Solved {
        rounding,
        relaxation,
        timings: Timings {
            lift: (t1 - t0).as_secs_f64(),
            sdp: (t2 - t1).as_secs_f64(),
            rounding: (t3 - t2).as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqp::{brute_force, LinearConstraint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn blocks(m: usize, k: usize) -> Vec<Vec<usize>> {
        (0..m).map(|b| (b * k..(b + 1) * k).collect()).collect()
    }

    fn random_problem(seed: u64, m: usize, k: usize) -> BqpProblem {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = m * k;
        let q = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        BqpProblem::new(q, r, blocks(m, k), vec![], vec![]).unwrap()
    }

    #[test]
    fn single_variable_objective_matrix() {
        let prob = BqpProblem::new(vec![3.0], vec![5.0], vec![vec![0]], vec![], vec![]).unwrap();
        let a = lift(&prob).objective().clone();
        let (q, rho) = (3.0, 5.0);
        let expected = DMatrix::from_row_slice(2, 2, &[q + 2.0 * rho, rho + q, rho + q, q]) * 0.25;
        assert!((a - expected).amax() < 1e-15);
    }

    #[test]
    fn block_constants_for_five_candidates() {
        let prob = random_problem(1, 1, 5);
        let lifted = lift(&prob);
        let eqs = lifted.problem().equalities();
        assert_eq!(eqs.len(), 6 + 2);
        assert_eq!(eqs[6].rhs, -3.0);
        assert_eq!(eqs[7].rhs, 9.0);
    }

    #[test]
    fn lifted_points_satisfy_constraints_and_null_vectors() {
        let eq = LinearConstraint::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1.0);
        let prob = random_problem(2, 2, 3).with_constraints(vec![eq], vec![]).unwrap();
        let lifted = lift(&prob);
        let z = prob.point_from_choices(&[0, 2]);
        assert!(prob.is_feasible(&z).feasible);
        let y = LiftedSdp::lift_point(&z);
        for c in lifted.problem().equalities() {
            assert!((c.matrix.dot_dense(&y) - c.rhs).abs() < 1e-12);
        }
        for v in lifted.null_vectors() {
            let yv = &y * nalgebra::DVector::from_vec(v.clone());
            assert!(yv.amax() < 1e-12);
        }
    }

    #[test]
    fn tiny_relaxation_bounds_optimum() {
        let prob = random_problem(3, 1, 2);
        let relax = relax_and_solve(&prob, &SdpOptions::default()).unwrap();
        let best = brute_force(&prob).unwrap().objective;
        assert!(relax.value >= best - 1e-6 * (1.0 + best.abs()));
    }

    #[test]
    fn concave_diagonal_single_block_is_tight() {
        let q = vec![-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, -0.5];
        let prob = BqpProblem::new(q, vec![0.0; 3], vec![vec![0, 1, 2]], vec![], vec![]).unwrap();
        let relax = relax_and_solve(&prob, &SdpOptions::default()).unwrap();
        assert!((relax.value - (-0.5)).abs() < 1e-6, "{}", relax.value);
    }

    #[test]
    fn inconsistent_equality_is_infeasible() {
        let eq = LinearConstraint::new(vec![1.0, 1.0], 2.0);
        let prob = BqpProblem::new(vec![0.0; 4], vec![1.0, 0.0], vec![vec![0, 1]], vec![eq], vec![]).unwrap();
        assert!(matches!(
            relax_and_solve(&prob, &SdpOptions::default()),
            Err(RoundingError::SdpSolveFailure(SdpStatus::Infeasible))
        ));
    }

    #[test]
    fn sandwich_on_small_instances() {
        for seed in 0..5 {
            let prob = random_problem(10 + seed, 3, 3);
            let solved = solve_bqp(&prob, &SolveOptions::default()).unwrap();
            let best = brute_force(&prob).unwrap().objective;
            let g = solved.relaxation.value;
            assert!(solved.rounding.objective <= best + 1e-12);
            assert!(best <= g + 1e-6 * (1.0 + g.abs()), "seed {seed}: {best} > {g}");
        }
    }

    proptest! {
        #[test]
        fn lift_preserves_objective(seed in 0u64..1000, choice in proptest::collection::vec(0usize..3, 3)) {
            let prob = random_problem(seed, 3, 3);
            let lifted = lift(&prob);
            let z = prob.point_from_choices(&choice);
            let f = prob.objective(&z).unwrap();
            let g = lifted.value(&LiftedSdp::lift_point(&z));
            prop_assert!((f - g).abs() <= 1e-9 * (1.0 + f.abs()));
        }
    }
}
