use nalgebra::DMatrix;

use super::{Dataset, DemandError, FeatureBank, Sample};

/// Transformed prices `[f_1(p_1)..f_D(p_1), ..., f_D(p_M)]`.
pub(crate) fn price_features(bank: &FeatureBank, prices: &[f64], row: usize) -> Result<Vec<f64>, DemandError> {
    let mut out = Vec::with_capacity(prices.len() * bank.price_dim());
    for (product, &p) in prices.iter().enumerate() {
        if p <= 0.0 && bank.needs_positive() {
            return Err(DemandError::NonPositivePrice { row, product, value: p });
        }
        out.extend(bank.transforms().iter().map(|f| f.apply(p)));
    }
    Ok(out)
}

/// One design row: `[1, f_1(p_1)..f_D(p_M), g_1..g_D']`.
pub fn design_row(bank: &FeatureBank, prices: &[f64], externals: &[f64]) -> Result<Vec<f64>, DemandError> {
    if externals.len() != bank.external_dim() {
        return Err(DemandError::DimensionMismatch(format!(
            "expected {} external features, got {}",
            bank.external_dim(),
            externals.len()
        )));
    }
    let mut row = vec![1.0];
    row.extend(price_features(bank, prices, 0)?);
    row.extend_from_slice(externals);
    Ok(row)
}

pub(crate) fn design_for(samples: &[&Sample], bank: &FeatureBank) -> Result<DMatrix<f64>, DemandError> {
    let m = samples.first().map_or(0, |s| s.prices.len());
    let cols = bank.column_count(m);
    let mut x = DMatrix::zeros(samples.len(), cols);
    for (i, s) in samples.iter().enumerate() {
        if s.externals.len() != bank.external_dim() {
            return Err(DemandError::DimensionMismatch(format!(
                "row {i}: expected {} external features",
                bank.external_dim()
            )));
        }
        x[(i, 0)] = 1.0;
        for (j, v) in price_features(bank, &s.prices, i)?.into_iter().enumerate() {
            x[(i, 1 + j)] = v;
        }
        for (j, &g) in s.externals.iter().enumerate() {
            x[(i, 1 + m * bank.price_dim() + j)] = g;
        }
    }
    Ok(x)
}

/// Regressor matrix for every sample, `N x (M*D + D' + 1)`.
pub fn design_matrix(data: &Dataset, bank: &FeatureBank) -> Result<DMatrix<f64>, DemandError> {
    let rows: Vec<&Sample> = data.samples().iter().collect();
    design_for(&rows, bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Transform;
    use rand::{Rng, SeedableRng};

    fn dataset(rows: Vec<(Vec<f64>, Vec<f64>)>) -> Dataset {
        Dataset::new(
            rows.into_iter()
                .map(|(p, g)| Sample {
                    date: None,
                    t: None,
                    quantities: vec![1.0; p.len()],
                    prices: p,
                    externals: g,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_product_standard_bank() {
        let data = dataset(vec![(vec![2.0], vec![])]);
        let x = design_matrix(&data, &FeatureBank::standard(0)).unwrap();
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 4.0, 0.5]);
    }

    #[test]
    fn linear_bank_with_external() {
        let data = dataset(vec![(vec![1.0, 3.0], vec![7.0])]);
        let bank = FeatureBank::new(vec![Transform::Linear], 1).unwrap();
        let x = design_matrix(&data, &bank).unwrap();
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 3.0, 7.0]);
    }

    #[test]
    fn non_positive_price_rejected_when_transform_needs_it() {
        let bank = FeatureBank::standard(0);
        assert!(matches!(
            design_row(&bank, &[1.0, 0.0], &[]),
            Err(DemandError::NonPositivePrice { product: 1, .. })
        ));
        let lin = FeatureBank::new(vec![Transform::Linear, Transform::Square], 0).unwrap();
        assert_eq!(design_row(&lin, &[-1.0], &[]).unwrap(), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn matches_hand_coded_builder() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let bank = FeatureBank::new(vec![Transform::Linear, Transform::Reciprocal, Transform::Log], 2).unwrap();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| {
                let p: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..2.0)).collect();
                let g: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                (p, g)
            })
            .collect();
        let data = dataset(rows.clone());
        let x = design_matrix(&data, &bank).unwrap();
        assert_eq!(x.ncols(), 9);
        for (i, (p, g)) in rows.iter().enumerate() {
            let expected = [
                1.0,
                p[0],
                1.0 / p[0],
                p[0].ln(),
                p[1],
                1.0 / p[1],
                p[1].ln(),
                g[0],
                g[1],
            ];
            for (j, e) in expected.iter().enumerate() {
                assert_eq!(x[(i, j)], *e, "row {i} col {j}");
            }
        }
    }
}
