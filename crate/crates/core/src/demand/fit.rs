//! Regression fitting.
//!
//! All solvers work per time step on the design matrix of [`super::design_matrix`].
//! Least-squares solves go through a column-scaled thin SVD; the normal
//! equations are never formed because the `1/x` and `x^2` columns are strongly
//! collinear with `x` on narrow price ranges.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use super::design::design_for;
use super::{Dataset, DemandError, DemandModel, FeatureBank, Sample};

/// Condition estimate above which a design is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// OMP stops once the best normalized residual correlation drops below this.
pub const OMP_CORRELATION_FLOOR: f64 = 1e-10;

/// Learning algorithm selector used by the CLI and the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum FitMethod {
    Ols,
    Ridge {
        lambda: f64,
    },
    Omp {
        k_max: usize,
    },
    /// `forced: None` picks the five products with the largest historical revenue.
    LsOmp {
        #[serde(default)]
        forced: Option<Vec<usize>>,
        k_extra: usize,
    },
}

impl FitMethod {
    pub fn ls_omp_default() -> Self {
        FitMethod::LsOmp {
            forced: None,
            k_extra: 10,
        }
    }

    pub fn fit(&self, data: &Dataset, bank: &FeatureBank) -> Result<DemandModel, DemandError> {
        match self {
            FitMethod::Ols => fit_ols(data, bank),
            FitMethod::Ridge { lambda } => fit_ridge(data, bank, *lambda),
            FitMethod::Omp { k_max } => fit_omp(data, bank, *k_max),
            FitMethod::LsOmp { forced, k_extra } => {
                let forced = match forced {
                    Some(f) => f.clone(),
                    None => top_revenue_products(data, 5),
                };
                fit_ls_omp(data, bank, &forced, *k_extra)
            }
        }
    }
}

/// Least squares `min ||X c - Y||` for every column of `Y`.
///
/// With `strict`, a condition estimate above [`SINGULAR_CONDITION`] is an
/// error; otherwise tiny singular values are truncated (minimum-norm solution).
pub(crate) fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>, strict: bool) -> Result<DMatrix<f64>, DemandError> {
    let p = x.ncols();
    if p == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    if strict && x.nrows() < p {
        return Err(DemandError::SingularDesign {
            condition: f64::INFINITY,
        });
    }
    let scale: Vec<f64> = x
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = x.clone();
    for (j, s) in scale.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let Some((u, s, v)) = linalg::thin_svd(&xs) else {
        return Err(DemandError::SingularDesign {
            condition: f64::INFINITY,
        });
    };
    let smax = s.max();
    let smin = if s.len() < p { 0.0 } else { s.min() };
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if strict && !(condition <= SINGULAR_CONDITION) {
        return Err(DemandError::SingularDesign { condition });
    }
    let cutoff = smax * 1e-13;
    let mut uty = u.transpose() * y;
    for (i, mut row) in uty.row_iter_mut().enumerate() {
        let inv = if s[i] > cutoff { 1.0 / s[i] } else { 0.0 };
        row.scale_mut(inv);
    }
    let mut coef = v * uty;
    for (j, sc) in scale.iter().enumerate() {
        coef.row_mut(j).scale_mut(1.0 / sc);
    }
    Ok(coef)
}

fn quantity_matrix(rows: &[&Sample]) -> DMatrix<f64> {
    let m = rows.first().map_or(0, |s| s.quantities.len());
    DMatrix::from_fn(rows.len(), m, |i, j| rows[i].quantities[j])
}

fn check_bank(data: &Dataset, bank: &FeatureBank) -> Result<(), DemandError> {
    if data.external_dim() != bank.external_dim() {
        return Err(DemandError::DimensionMismatch(format!(
            "dataset has {} external features, bank expects {}",
            data.external_dim(),
            bank.external_dim()
        )));
    }
    Ok(())
}

/// Runs `per_step` on every time step's design and quantity matrices.
fn for_each_step<F>(data: &Dataset, bank: &FeatureBank, mut per_step: F) -> Result<DemandModel, DemandError>
where
    F: FnMut(&DMatrix<f64>, &DMatrix<f64>, &mut StepCoefficients) -> Result<(), DemandError>,
{
    check_bank(data, bank)?;
    let m = data.n_products();
    let horizon = data.horizon();
    let mut model = DemandModel::zeros(bank.clone(), m, horizon);
    for t in 1..=horizon {
        let rows = data.step(t);
        if rows.is_empty() {
            return Err(DemandError::InvalidArgument(format!("no samples for time step {t}")));
        }
        let x = design_for(&rows, bank)?;
        let y = quantity_matrix(&rows);
        let mut step = StepCoefficients::new(bank.column_count(m), m);
        per_step(&x, &y, &mut step)?;
        step.write_into(&mut model, t, bank);
    }
    Ok(model)
}

/// Coefficients of one time step, one column of `coef` per product, plus the
/// set of active design columns per product.
struct StepCoefficients {
    coef: DMatrix<f64>,
    active: Vec<Vec<bool>>,
}

impl StepCoefficients {
    fn new(cols: usize, m: usize) -> Self {
        Self {
            coef: DMatrix::zeros(cols, m),
            active: vec![vec![true; cols]; m],
        }
    }

    fn set_product(&mut self, m: usize, cols: &[usize], values: &DVector<f64>) {
        self.coef.column_mut(m).fill(0.0);
        self.active[m].iter_mut().for_each(|a| *a = false);
        for (c, v) in cols.iter().zip(values.iter()) {
            self.coef[(*c, m)] = *v;
            self.active[m][*c] = true;
        }
    }

    fn write_into(&self, model: &mut DemandModel, t: usize, bank: &FeatureBank) {
        let ti = t - 1;
        let pd = model.n_products * bank.price_dim();
        for m in 0..model.n_products {
            model.alpha[ti][m] = self.coef[(0, m)];
            for j in 0..pd {
                let on = self.active[m][1 + j];
                model.mask[ti][m][j] = on;
                model.beta[ti][m][j] = if on { self.coef[(1 + j, m)] } else { 0.0 };
            }
            for j in 0..bank.external_dim() {
                model.gamma[ti][m][j] = self.coef[(1 + pd + j, m)];
            }
        }
    }
}

/// Ordinary least squares, independently per product and time step.
pub fn fit_ols(data: &Dataset, bank: &FeatureBank) -> Result<DemandModel, DemandError> {
    for_each_step(data, bank, |x, y, step| {
        step.coef = lstsq(x, y, true)?;
        Ok(())
    })
}

/// Ridge regression; the bias is not penalized.
pub fn fit_ridge(data: &Dataset, bank: &FeatureBank, lambda: f64) -> Result<DemandModel, DemandError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(DemandError::InvalidArgument(format!("ridge penalty {lambda} must be finite and >= 0")));
    }
    if lambda == 0.0 {
        return fit_ols(data, bank);
    }
    for_each_step(data, bank, |x, y, step| {
        let feats = x.columns(1, x.ncols() - 1).into_owned();
        let x_mean = feats.row_mean();
        let y_mean = y.row_mean();
        let mut xc = feats.clone();
        for mut row in xc.row_iter_mut() {
            row -= &x_mean;
        }
        let mut yc = y.clone();
        for mut row in yc.row_iter_mut() {
            row -= &y_mean;
        }
        let (u, sv, v) = linalg::thin_svd(&xc).ok_or(DemandError::SingularDesign {
            condition: f64::INFINITY,
        })?;
        let mut uty = u.transpose() * &yc;
        for (i, mut row) in uty.row_iter_mut().enumerate() {
            let s = sv[i];
            row.scale_mut(s / (s * s + lambda));
        }
        let w = v * uty;
        let bias = &y_mean - &x_mean * &w;
        step.coef.rows_mut(1, w.nrows()).copy_from(&w);
        step.coef.row_mut(0).copy_from(&bias);
        Ok(())
    })
}

/// Greedy orthogonal matching pursuit over `candidates` (design column
/// indices, never the bias column 0). The bias is always part of the model.
/// Returns the selected columns in selection order.
pub(crate) fn omp_select(x: &DMatrix<f64>, y: &DVector<f64>, candidates: &[usize], k: usize) -> Vec<usize> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    let mut residual = y - &basis[0] * basis[0].dot(y);
    let centered_norm: Vec<f64> = candidates
        .iter()
        .map(|&c| {
            let col = x.column(c);
            let mean = col.mean();
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt()
        })
        .collect();
    let mut usable: Vec<bool> = centered_norm.iter().map(|&cn| cn > 0.0).collect();
    let mut selected = Vec::new();
    let y_norm = y.norm();
    while selected.len() < k {
        let r_norm = residual.norm();
        if r_norm <= 1e-14 * y_norm.max(f64::MIN_POSITIVE) {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for (idx, &c) in candidates.iter().enumerate() {
            if !usable[idx] {
                continue;
            }
            let corr = x.column(c).dot(&residual).abs() / centered_norm[idx];
            if best.is_none_or(|(_, b)| corr > b) {
                best = Some((idx, corr));
            }
        }
        let Some((idx, corr)) = best else { break };
        if corr / r_norm < OMP_CORRELATION_FLOOR {
            break;
        }
        usable[idx] = false;
        let col = x.column(candidates[idx]).into_owned();
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let vn = v.norm();
        if vn <= 1e-12 * col.norm() {
            // already in the span of the selected atoms
            continue;
        }
        v /= vn;
        let proj = v.dot(&residual);
        residual.axpy(-proj, &v, 1.0);
        basis.push(v);
        selected.push(candidates[idx]);
    }
    selected
}

fn refit(x: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize], strict: bool) -> Result<DVector<f64>, DemandError> {
    let sub = x.select_columns(cols);
    let rhs = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let c = lstsq(&sub, &rhs, strict)?;
    Ok(c.column(0).into_owned())
}

/// Orthogonal matching pursuit with at most `k_max` non-bias atoms.
pub fn fit_omp(data: &Dataset, bank: &FeatureBank, k_max: usize) -> Result<DemandModel, DemandError> {
    let features = bank.column_count(data.n_products()) - 1;
    if k_max == 0 || k_max > features {
        return Err(DemandError::InvalidArgument(format!(
            "k_max must lie in 1..={features}, got {k_max}"
        )));
    }
    let candidates: Vec<usize> = (1..=features).collect();
    for_each_step(data, bank, |x, y, step| {
        for m in 0..y.ncols() {
            let target = y.column(m).into_owned();
            let mut cols = vec![0];
            cols.extend(omp_select(x, &target, &candidates, k_max));
            let coef = refit(x, &target, &cols, false)?;
            step.set_product(m, &cols, &coef);
        }
        Ok(())
    })
}

/// Two-stage LS-OMP: least squares on the price features of `forced`
/// products (0-based), then OMP with `k_extra` atoms on the residual over all
/// other columns, then a joint refit on the union of both supports.
pub fn fit_ls_omp(
    data: &Dataset,
    bank: &FeatureBank,
    forced: &[usize],
    k_extra: usize,
) -> Result<DemandModel, DemandError> {
    let m_count = data.n_products();
    if let Some(bad) = forced.iter().find(|&&m| m >= m_count) {
        return Err(DemandError::InvalidArgument(format!(
            "forced product {bad} outside 0..{m_count}"
        )));
    }
    let d = bank.price_dim();
    let mut stage1 = vec![0];
    let mut forced_sorted = forced.to_vec();
    forced_sorted.sort_unstable();
    forced_sorted.dedup();
    for &m in &forced_sorted {
        stage1.extend((0..d).map(|k| 1 + m * d + k));
    }
    let total = bank.column_count(m_count);
    let rest: Vec<usize> = (1..total).filter(|c| !stage1.contains(c)).collect();
    for_each_step(data, bank, |x, y, step| {
        let x1 = x.select_columns(&stage1);
        let c1 = lstsq(&x1, y, true)?;
        let residual = y - &x1 * &c1;
        for m in 0..y.ncols() {
            let r = residual.column(m).into_owned();
            let mut cols = stage1.clone();
            cols.extend(omp_select(x, &r, &rest, k_extra));
            cols.sort_unstable();
            let target = y.column(m).into_owned();
            let coef = refit(x, &target, &cols, false)?;
            step.set_product(m, &cols, &coef);
        }
        Ok(())
    })
}

/// The `k` products with the largest historical revenue `sum p*q`, ties to the lower index.
pub fn top_revenue_products(data: &Dataset, k: usize) -> Vec<usize> {
    let m = data.n_products();
    let mut revenue = vec![0.0; m];
    for s in data.samples() {
        for (r, (p, q)) in revenue.iter_mut().zip(s.prices.iter().zip(&s.quantities)) {
            *r += p * q;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| revenue[b].total_cmp(&revenue[a]).then(a.cmp(&b)));
    order.truncate(k.min(m));
    order
}

/// Per-product relative training error `||q - q_hat|| / ||q||` over all samples.
pub fn relative_errors(model: &DemandModel, data: &Dataset) -> Result<Vec<f64>, DemandError> {
    let m = data.n_products();
    let mut res = vec![0.0; m];
    let mut tot = vec![0.0; m];
    for s in data.samples() {
        let pred = model.predict(&s.prices, &s.externals, s.t.unwrap_or(1))?;
        for j in 0..m {
            res[j] += (s.quantities[j] - pred[j]).powi(2);
            tot[j] += s.quantities[j].powi(2);
        }
    }
    Ok(res
        .iter()
        .zip(&tot)
        .map(|(r, t)| if *t > 0.0 { (r / t).sqrt() } else { r.sqrt() })
        .collect())
}

/// Training residual sum of squares, summed over products and time steps.
pub fn training_rss(model: &DemandModel, data: &Dataset) -> Result<f64, DemandError> {
    let mut rss = 0.0;
    for s in data.samples() {
        let pred = model.predict(&s.prices, &s.externals, s.t.unwrap_or(1))?;
        rss += s.quantities.iter().zip(&pred).map(|(q, p)| (q - p).powi(2)).sum::<f64>();
    }
    Ok(rss)
}
