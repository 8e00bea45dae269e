//! Solver properties over lifted pricing relaxations, restricted to their
//! forced face as in [`priceopt::sdprelax::relax_and_solve`].

use nalgebra::DMatrix;
use priceopt::profit::BusinessConstraint;
use priceopt::sdprelax::{lift, Face};
use priceopt::sdpsolver::{solve, SdpOptions, SdpProblem, SdpSolution, SdpStatus};
use priceopt::sim::generate;
use proptest::prelude::*;

fn lifted(m: usize, seed: u64, limit: Option<usize>) -> SdpProblem {
    let constraints: Vec<BusinessConstraint> = limit
        .map(|limit| BusinessConstraint::MaxDiscountCount { limit })
        .into_iter()
        .collect();
    let prob = generate(m, seed, 0.0).instance().build_bqp(&constraints).unwrap();
    let lifted = lift(&prob);
    Face::new(lifted.dim(), lifted.null_vectors())
        .restrict(lifted.problem())
        .unwrap()
}

fn optimal(prob: &SdpProblem) -> SdpSolution {
    let sol = solve(prob, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    sol
}

#[test]
fn gap_shrinks_over_every_five_iterations() {
    for m in [2, 4, 6] {
        for seed in 0..5 {
            for limit in [None, Some(1)] {
                let sol = optimal(&lifted(m, seed, limit));
                let h = &sol.gap_history;
                for k in 0..h.len().saturating_sub(5) {
                    assert!(
                        h[k + 5] < h[k],
                        "M={m} seed={seed} limit={limit:?}: gap {} at {} vs {} at {k}",
                        h[k + 5],
                        k + 5,
                        h[k]
                    );
                }
            }
        }
    }
}

#[test]
fn status_optimal_means_small_residuals() {
    let opts = SdpOptions::default();
    for seed in 0..5 {
        let sol = optimal(&lifted(5, seed, Some(2)));
        assert!(sol.residuals.max() <= opts.tol, "{:?}", sol.residuals);
        let eig = sol.y.clone().symmetric_eigen().eigenvalues.min();
        assert!(eig >= -1e-8 * (1.0 + sol.y.norm()), "min eigenvalue {eig}");
        assert!(sol.dual_objective >= sol.primal_objective - 10.0 * opts.tol * (1.0 + sol.primal_objective.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn objective_scales_with_positive_factor(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let prob = lifted(3, seed, None);
        let base = optimal(&prob).primal_objective;
        let scaled = optimal(&prob.with_objective_scaled(alpha)).primal_objective;
        prop_assert!((scaled - alpha * base).abs() <= 1e-6 * (alpha * base).abs().max(1.0),
            "{scaled} vs {alpha} * {base}");
    }
}

#[test]
fn identity_objective_forced_by_diagonal() {
    let eqs = (0..2)
        .map(|i| {
            priceopt::sdpsolver::SdpConstraint::new(priceopt::sdpsolver::SymSparse::new(2, [(i, i, 1.0)]).unwrap(), 1.0)
        })
        .collect();
    let prob = SdpProblem::new(DMatrix::identity(2, 2), eqs, vec![]).unwrap();
    let sol = optimal(&prob);
    assert!((sol.primal_objective - 2.0).abs() <= 1e-6);
}
