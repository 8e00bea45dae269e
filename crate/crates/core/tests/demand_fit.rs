//! Fitting routines against independent dense-algebra oracles.

use nalgebra::{DMatrix, DVector};
use priceopt::demand::{
    design_matrix, design_row, fit_ls_omp, fit_ols, fit_omp, fit_ridge, training_rss, Dataset, DemandModel,
    FeatureBank, Sample, Transform,
};
use priceopt::sim::{generate, generate_sparse, sample_dataset};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Prices uniform in `[0.5, 1.5]`, quantities from `q`.
fn dataset(n: usize, m: usize, seed: u64, q: impl Fn(&[f64], &mut ChaCha8Rng) -> Vec<f64>) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let prices: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
            let quantities = q(&prices, &mut rng);
            Sample {
                date: None,
                t: None,
                prices,
                externals: vec![],
                quantities,
            }
        })
        .collect();
    Dataset::new(samples).unwrap()
}

/// Coefficients of product `m` in design-column order.
fn coefficients(model: &DemandModel, m: usize) -> DVector<f64> {
    let mut c = vec![model.alpha[0][m]];
    c.extend(&model.beta[0][m]);
    c.extend(&model.gamma[0][m]);
    DVector::from_vec(c)
}

fn quantities(data: &Dataset, m: usize) -> DVector<f64> {
    DVector::from_iterator(data.len(), data.samples().iter().map(|s| s.quantities[m]))
}

fn linear_bank() -> FeatureBank {
    FeatureBank::new(vec![Transform::Linear], 0).unwrap()
}

fn support(model: &DemandModel, m: usize) -> Vec<usize> {
    (0..model.mask[0][m].len()).filter(|&j| model.mask[0][m][j]).collect()
}

#[test]
fn ols_recovers_noiseless_coefficients() {
    let gt = generate(3, 8, 0.0);
    let data = sample_dataset(&gt, 300, 2);
    let fit = fit_ols(&data, &FeatureBank::standard(0)).unwrap();
    for m in 0..3 {
        let (c, truth) = (coefficients(&fit, m), coefficients(&gt.model, m));
        assert!((&c - &truth).norm() <= 1e-6 * truth.norm(), "product {m}: {c} vs {truth}");
    }
}

#[test]
fn ols_on_constant_demand() {
    let data = dataset(50, 2, 1, |_, _| vec![4.0, 4.0]);
    let fit = fit_ols(&data, &linear_bank()).unwrap();
    for m in 0..2 {
        assert!((fit.alpha[0][m] - 4.0).abs() < 1e-10);
        assert!(fit.beta[0][m].iter().all(|b| b.abs() < 1e-10));
    }
}

#[test]
fn ols_gradient_vanishes_and_residual_is_orthogonal() {
    let data = dataset(200, 3, 5, |p, rng| {
        vec![
            10.0 - 3.0 * p[0] + p[1] + rng.random_range(-1.0..1.0),
            8.0 + 2.0 / p[1] + rng.random_range(-1.0..1.0),
            6.0 - p[2] * p[2] + 0.5 * p[0] + rng.random_range(-1.0..1.0),
        ]
    });
    let bank = FeatureBank::standard(0);
    let x = design_matrix(&data, &bank).unwrap();
    let fit = fit_ols(&data, &bank).unwrap();
    for m in 0..3 {
        let (c, y) = (coefficients(&fit, m), quantities(&data, m));
        let res = &y - &x * &c;
        for col in x.column_iter() {
            assert!(col.dot(&res).abs() <= 1e-6 * col.norm() * res.norm());
        }
        // central differences of the RSS along each coordinate
        let rss = |c: &DVector<f64>| (&y - &x * c).norm_squared();
        for j in 0..c.len() {
            let h = 1e-6 * c[j].abs().max(1.0);
            let mut e = DVector::zeros(c.len());
            e[j] = h;
            let grad = (rss(&(&c + &e)) - rss(&(&c - &e))) / (2.0 * h);
            assert!(grad.abs() <= 1e-5 * rss(&c).max(1.0), "coordinate {j}: {grad}");
        }
    }
}

fn noisy_three_products(seed: u64) -> Dataset {
    dataset(80, 3, seed, |p, rng| {
        vec![
            5.0 - p[0] + rng.random_range(-0.5..0.5),
            4.0 + p[0] - 2.0 * p[1] + rng.random_range(-0.5..0.5),
            3.0 + p[2] + rng.random_range(-0.5..0.5),
        ]
    })
}

#[test]
fn ridge_without_penalty_is_ols() {
    let data = noisy_three_products(3);
    let bank = FeatureBank::standard(0);
    let (a, b) = (fit_ols(&data, &bank).unwrap(), fit_ridge(&data, &bank, 0.0).unwrap());
    for m in 0..3 {
        assert!((coefficients(&a, m) - coefficients(&b, m)).amax() <= 1e-10);
    }
}

#[test]
fn ridge_matches_penalized_normal_equations() {
    let data = noisy_three_products(4);
    let bank = linear_bank();
    let x = design_matrix(&data, &bank).unwrap();
    let lambda = 1.0;
    let mut penalty = DMatrix::identity(x.ncols(), x.ncols()) * lambda;
    penalty[(0, 0)] = 0.0;
    let lhs = x.transpose() * &x + penalty;
    let fit = fit_ridge(&data, &bank, lambda).unwrap();
    for m in 0..3 {
        let oracle = lhs.clone().lu().solve(&(x.transpose() * quantities(&data, m))).unwrap();
        assert!((coefficients(&fit, m) - oracle).amax() <= 1e-9);
    }
}

#[test]
fn huge_ridge_penalty_leaves_the_mean() {
    let data = noisy_three_products(5);
    let fit = fit_ridge(&data, &FeatureBank::standard(0), 1e12).unwrap();
    for m in 0..3 {
        let mean = quantities(&data, m).mean();
        assert!(fit.beta[0][m].iter().all(|b| b.abs() <= 1e-6));
        assert!((fit.alpha[0][m] - mean).abs() <= 1e-5 * mean.abs());
    }
}

#[test]
fn ridge_norm_shrinks_with_penalty() {
    let data = noisy_three_products(6);
    let bank = FeatureBank::standard(0);
    let mut last = f64::INFINITY;
    for lambda in [0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3] {
        let fit = fit_ridge(&data, &bank, lambda).unwrap();
        let norm: f64 = (0..3).map(|m| fit.beta[0][m].iter().map(|b| b * b).sum::<f64>()).sum();
        assert!(norm <= last * (1.0 + 1e-12), "lambda {lambda}: {norm} > {last}");
        last = norm;
    }
}

#[test]
fn omp_recovers_two_sparse_support() {
    let data = dataset(200, 6, 7, |p, _| {
        let q = 3.0 + 2.0 * p[1] - 4.0 * p[4];
        vec![q; 6]
    });
    let fit = fit_omp(&data, &linear_bank(), 2).unwrap();
    assert_eq!(support(&fit, 0), vec![1, 4]);
    assert!((fit.beta[0][0][1] - 2.0).abs() < 1e-9);
    assert!((fit.beta[0][0][4] + 4.0).abs() < 1e-9);
}

#[test]
fn omp_with_every_atom_is_ols() {
    let data = noisy_three_products(8);
    let bank = linear_bank();
    let (a, b) = (fit_ols(&data, &bank).unwrap(), fit_omp(&data, &bank, 3).unwrap());
    for m in 0..3 {
        assert!((coefficients(&a, m) - coefficients(&b, m)).amax() <= 1e-8);
    }
}

#[test]
fn omp_on_uncorrelated_target_is_bias_only() {
    let data = dataset(40, 2, 9, |_, _| vec![2.5, -1.0]);
    let fit = fit_omp(&data, &FeatureBank::standard(0), 4).unwrap();
    for (m, mean) in [(0, 2.5), (1, -1.0)] {
        assert!(support(&fit, m).is_empty());
        assert!((fit.alpha[0][m] - mean).abs() < 1e-12);
    }
}

#[test]
fn omp_rss_is_non_increasing_in_budget() {
    let data = noisy_three_products(10);
    let bank = FeatureBank::standard(0);
    let mut last = f64::INFINITY;
    for k in 1..=9 {
        let rss = training_rss(&fit_omp(&data, &bank, k).unwrap(), &data).unwrap();
        assert!(rss <= last * (1.0 + 1e-12), "k={k}: {rss} > {last}");
        last = rss;
    }
}

#[test]
fn ls_omp_forcing_everything_is_ols() {
    let data = noisy_three_products(11);
    let bank = FeatureBank::standard(0);
    let (a, b) = (fit_ols(&data, &bank).unwrap(), fit_ls_omp(&data, &bank, &[0, 1, 2], 0).unwrap());
    for m in 0..3 {
        assert!((coefficients(&a, m) - coefficients(&b, m)).amax() <= 1e-8);
    }
}

#[test]
fn ls_omp_forcing_nothing_is_omp() {
    let data = noisy_three_products(12);
    let bank = FeatureBank::standard(0);
    let (a, b) = (fit_omp(&data, &bank, 4).unwrap(), fit_ls_omp(&data, &bank, &[], 4).unwrap());
    for m in 0..3 {
        assert_eq!(support(&a, m), support(&b, m));
        assert!((coefficients(&a, m) - coefficients(&b, m)).amax() <= 1e-8);
    }
}

#[test]
fn ls_omp_default_support_is_bounded() {
    let gt = generate_sparse(20, 5, 10, 3, 1.0);
    let data = sample_dataset(&gt, 600, 4);
    let bank = FeatureBank::standard(0);
    let forced = priceopt::demand::top_revenue_products(&data, 5);
    let fit = fit_ls_omp(&data, &bank, &forced, 10).unwrap();
    for m in 0..20 {
        assert!(support(&fit, m).len() <= 5 * bank.price_dim() + 10);
    }
}

#[test]
fn prediction_matches_direct_formula() {
    let gt = generate(4, 13, 0.0);
    let p = [0.95, 0.8, 1.0, 0.85];
    let q = gt.model.predict(&p, &[], 1).unwrap();
    for m in 0..4 {
        let mut expect = gt.model.alpha[0][m];
        for (j, pj) in p.iter().enumerate() {
            let b = &gt.model.beta[0][m][3 * j..3 * j + 3];
            expect += b[0] * pj + b[1] * pj * pj + b[2] / pj;
        }
        assert!((q[m] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn prediction_is_affine_in_features(
        seed in 0u64..500,
        p1 in proptest::collection::vec(0.5f64..2.0, 3),
        p2 in proptest::collection::vec(0.5f64..2.0, 3),
        g1 in -1.0f64..1.0,
        g2 in -1.0f64..1.0,
        w in 0.0f64..1.0,
    ) {
        let bank = FeatureBank::standard(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = DemandModel::zeros(bank.clone(), 3, 1);
        for m in 0..3 {
            model.alpha[0][m] = rng.random_range(-5.0..5.0);
            model.beta[0][m].iter_mut().for_each(|b| *b = rng.random_range(-2.0..2.0));
            model.gamma[0][m][0] = rng.random_range(-2.0..2.0);
        }
        let r1 = DVector::from_vec(design_row(&bank, &p1, &[g1]).unwrap());
        let r2 = DVector::from_vec(design_row(&bank, &p2, &[g2]).unwrap());
        let q1 = model.predict(&p1, &[g1], 1).unwrap();
        let q2 = model.predict(&p2, &[g2], 1).unwrap();
        for m in 0..3 {
            let c = coefficients(&model, m);
            let mixed = c.dot(&(&r1 * w + &r2 * (1.0 - w)));
            let combo = w * q1[m] + (1.0 - w) * q2[m];
            prop_assert!((mixed - combo).abs() <= 1e-9 * combo.abs().max(1.0));
        }
    }
}
