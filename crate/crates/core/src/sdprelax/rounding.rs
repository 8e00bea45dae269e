//! Rounding a relaxed `Y` to a one-hot `z` using the row `y_0i`.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RoundingError;
use crate::bqp::{improves, BqpProblem, BqpSolution};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMethod {
    Simple,
    Deterministic,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingResult {
    pub z: Vec<u8>,
    /// `f(z)`.
    pub objective: f64,
    /// `g(Y)`.
    pub upper: f64,
    /// `f(z) / g(Y)`; absent when `g(Y) <= 0`.
    pub delta: Option<f64>,
    pub method: RoundingMethod,
    pub seed: Option<u64>,
    /// Candidates evaluated (deterministic) or blocks redrawn (randomized).
    pub work: usize,
}

/// Lower bound `f(z)/g(Y)` on the approximation ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub f: f64,
    pub g: f64,
    pub delta: Option<f64>,
}

pub fn certificate(prob: &BqpProblem, z: &[u8], g_upper: f64) -> Result<Certificate, RoundingError> {
    let f = prob.objective(z)?;
    Ok(Certificate {
        f,
        g: g_upper,
        delta: (g_upper > 0.0).then(|| f / g_upper),
    })
}

fn y0(y: &DMatrix<f64>, n: usize) -> Result<Vec<f64>, RoundingError> {
    if y.nrows() != n + 1 || y.ncols() != n + 1 {
        return Err(RoundingError::InvalidArgument(format!(
            "Y is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            n + 1,
            n + 1
        )));
    }
    Ok((1..=n).map(|i| y[(0, i)]).collect())
}

/// Position of the largest value, lowest position on ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Picks the largest `y_0i` in every block. Side constraints may be violated;
/// `feasible` reports it.
pub fn round_simple(y: &DMatrix<f64>, prob: &BqpProblem) -> Result<BqpSolution, RoundingError> {
    let y0 = y0(y, prob.n())?;
    let choice: Vec<usize> = prob
        .partition()
        .iter()
        .map(|b| argmax(b.iter().map(|&i| y0[i])))
        .collect();
    let z = prob.point_from_choices(&choice);
    Ok(BqpSolution {
        objective: prob.objective(&z)?,
        feasible: prob.is_feasible(&z).feasible,
        z,
    })
}

fn result(
    prob: &BqpProblem,
    z: Vec<u8>,
    upper: f64,
    method: RoundingMethod,
    seed: Option<u64>,
    work: usize,
) -> Result<RoundingResult, RoundingError> {
    let cert = certificate(prob, &z, upper)?;
    Ok(RoundingResult {
        z,
        objective: cert.f,
        upper,
        delta: cert.delta,
        method,
        seed,
        work,
    })
}

/// Deterministic search: grow per-block candidate sets by the globally
/// largest remaining `y_0i` until their product reaches `t_search`, then
/// return the best feasible combination (lexicographically smallest `z` on
/// ties).
pub fn round_deterministic(
    y: &DMatrix<f64>,
    prob: &BqpProblem,
    t_search: usize,
    g_upper: f64,
) -> Result<RoundingResult, RoundingError> {
    if t_search == 0 {
        return Err(RoundingError::InvalidArgument("T_search must be at least 1".into()));
    }
    let y0 = y0(y, prob.n())?;
    let blocks = prob.partition();
    let mut sets: Vec<Vec<usize>> = blocks
        .iter()
        .map(|b| vec![argmax(b.iter().map(|&i| y0[i]))])
        .collect();
    let mut rest: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(m, b)| (0..b.len()).map(move |k| (m, k)))
        .filter(|&(m, k)| sets[m][0] != k)
        .collect();
    // stable sort keeps the lowest flat index first among equal values
    rest.sort_by(|a, b| y0[blocks[b.0][b.1]].total_cmp(&y0[blocks[a.0][a.1]]));
    let mut size: u128 = 1;
    let mut next = rest.into_iter();
    while size < t_search as u128 {
        let Some((m, k)) = next.next() else { break };
        size = size / sets[m].len() as u128 * (sets[m].len() as u128 + 1);
        sets[m].push(k);
    }
    for s in &mut sets {
        s.sort_unstable();
    }

    let mut choice: Vec<usize> = vec![0; sets.len()];
    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut evaluated = 0;
    let check = prob.has_side_constraints();
    loop {
        let picks: Vec<usize> = choice.iter().zip(&sets).map(|(&c, s)| s[c]).collect();
        let z = prob.point_from_choices(&picks);
        if !check || prob.is_feasible(&z).feasible {
            let ones: Vec<usize> = picks.iter().zip(blocks).map(|(&k, b)| b[k]).collect();
            let f = prob.objective_on(&ones);
            if improves(f, &z, best.as_ref().map(|(bf, bz)| (*bf, bz.as_slice()))) {
                best = Some((f, z));
            }
        }
        evaluated += 1;
        let mut m = sets.len();
        loop {
            if m == 0 {
                let (_, z) = best.ok_or(RoundingError::NoFeasibleFound)?;
                return result(prob, z, g_upper, RoundingMethod::Deterministic, None, evaluated);
            }
            m -= 1;
            choice[m] += 1;
            if choice[m] < sets[m].len() {
                break;
            }
            choice[m] = 0;
        }
    }
}

/// Settings for [`round_randomized`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedOptions {
    pub seed: u64,
    /// Independent passes; a pass ends at the first feasible point or after
    /// `100 n` block redraws.
    pub max_restarts: usize,
    /// Feasible points to collect before returning the best of them.
    pub draws: usize,
}

impl Default for RandomizedOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_restarts: 10,
            draws: 1,
        }
    }
}

/// Randomized search: draw every block with weights `(y_0i + 1)/2` (clamped
/// to `[0, 1]`, uniform if all vanish), then redraw a random block touched by
/// a violated constraint until none is left.
pub fn round_randomized(
    y: &DMatrix<f64>,
    prob: &BqpProblem,
    opts: &RandomizedOptions,
    g_upper: f64,
) -> Result<RoundingResult, RoundingError> {
    if opts.max_restarts == 0 || opts.draws == 0 {
        return Err(RoundingError::InvalidArgument("max_restarts and draws must be positive".into()));
    }
    let y0 = y0(y, prob.n())?;
    let blocks = prob.partition();
    let dists: Vec<Option<WeightedIndex<f64>>> = blocks
        .iter()
        .map(|b| WeightedIndex::new(b.iter().map(|&i| ((y0[i] + 1.0) / 2.0).clamp(0.0, 1.0))).ok())
        .collect();
    let mut rng = seeded(opts.seed);
    let draw = |m: usize, rng: &mut rand_chacha::ChaCha8Rng| match &dists[m] {
        Some(d) => d.sample(rng),
        None => rng.random_range(0..blocks[m].len()),
    };
    // blocks holding a nonzero coefficient of each side constraint
    let touches = |coeffs: &[f64]| -> Vec<usize> {
        blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.iter().any(|&i| coeffs[i] != 0.0))
            .map(|(m, _)| m)
            .collect()
    };
    let eq_blocks: Vec<Vec<usize>> = prob.equalities().iter().map(|c| touches(&c.coeffs)).collect();
    let in_blocks: Vec<Vec<usize>> = prob.inequalities().iter().map(|c| touches(&c.coeffs)).collect();
    let cap = 100 * prob.n();

    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut found = 0;
    let mut redraws = 0;
    for _ in 0..opts.max_restarts {
        let mut choice: Vec<usize> = (0..blocks.len()).map(|m| draw(m, &mut rng)).collect();
        let mut pass_redraws = 0;
        loop {
            let z = prob.point_from_choices(&choice);
            let report = prob.is_feasible(&z);
            if report.feasible {
                let f = prob.objective(&z)?;
                if improves(f, &z, best.as_ref().map(|(bf, bz)| (*bf, bz.as_slice()))) {
                    best = Some((f, z));
                }
                found += 1;
                break;
            }
            if pass_redraws == cap {
                break;
            }
            let mut violating = vec![false; blocks.len()];
            for v in &report.violations {
                let list = match v {
                    crate::bqp::Violation::Equality { index, .. } => &eq_blocks[*index],
                    crate::bqp::Violation::Inequality { index, .. } => &in_blocks[*index],
                    crate::bqp::Violation::Partition { block, .. } => {
                        violating[*block] = true;
                        continue;
                    }
                };
                for &m in list {
                    violating[m] = true;
                }
            }
            let candidates: Vec<usize> = (0..blocks.len()).filter(|&m| violating[m]).collect();
            if candidates.is_empty() {
                // violated constraint without any variable: cannot be repaired
                break;
            }
            let m = candidates[rng.random_range(0..candidates.len())];
            choice[m] = draw(m, &mut rng);
            pass_redraws += 1;
        }
        redraws += pass_redraws;
        if found == opts.draws {
            break;
        }
    }
    let (_, z) = best.ok_or(RoundingError::NoFeasibleFound)?;
    result(prob, z, g_upper, RoundingMethod::Randomized, Some(opts.seed), redraws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqp::LinearConstraint;
    use crate::sdprelax::LiftedSdp;

    fn y_from_row(row: &[f64]) -> DMatrix<f64> {
        let n = row.len();
        let mut y = DMatrix::identity(n + 1, n + 1);
        for (i, v) in row.iter().enumerate() {
            y[(0, i + 1)] = *v;
            y[(i + 1, 0)] = *v;
        }
        y
    }

    fn flat(r: Vec<f64>, k: usize) -> BqpProblem {
        let n = r.len();
        let part = (0..n / k).map(|b| (b * k..(b + 1) * k).collect()).collect();
        BqpProblem::new(vec![0.0; n * n], r, part, vec![], vec![]).unwrap()
    }

    #[test]
    fn simple_picks_largest() {
        let prob = flat(vec![0.0, 0.0], 2);
        assert_eq!(round_simple(&y_from_row(&[0.9, -0.7]), &prob).unwrap().z, vec![1, 0]);
        assert_eq!(round_simple(&y_from_row(&[0.2, 0.2]), &prob).unwrap().z, vec![1, 0]);
    }

    #[test]
    fn simple_recovers_rank_one_lift() {
        let prob = flat(vec![0.0; 6], 3);
        let z = vec![0, 0, 1, 0, 1, 0];
        assert_eq!(round_simple(&LiftedSdp::lift_point(&z), &prob).unwrap().z, z);
    }

    #[test]
    fn deterministic_budget_one_is_simple() {
        let prob = flat(vec![1.0, 2.0, 0.5, 0.1, 0.3, 0.2], 3);
        let y = y_from_row(&[0.1, -0.2, -0.9, 0.3, -0.5, -0.8]);
        let det = round_deterministic(&y, &prob, 1, 10.0).unwrap();
        assert_eq!(det.z, round_simple(&y, &prob).unwrap().z);
        assert_eq!(det.work, 1);
        // larger budget finds the better candidate 1 in block 0
        let wide = round_deterministic(&y, &prob, 4, 10.0).unwrap();
        assert_eq!(wide.z, vec![0, 1, 0, 0, 1, 0]);
        assert!(wide.objective >= det.objective);
    }

    #[test]
    fn deterministic_finds_second_choice_when_top_excluded() {
        let mut prob = flat(vec![1.0, 0.5, 0.2, 1.0, 0.5, 0.2], 3);
        // forbid candidate 0 in both blocks
        let eqs = vec![
            LinearConstraint::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0),
            LinearConstraint::new(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 0.0),
        ];
        prob = prob.with_constraints(eqs, vec![]).unwrap();
        let y = y_from_row(&[0.9, -0.9, -1.0, 0.9, -0.9, -1.0]);
        let res = round_deterministic(&y, &prob, 100, 3.0).unwrap();
        assert_eq!(res.z, vec![0, 1, 0, 0, 1, 0]);
        assert!(matches!(round_deterministic(&y, &prob, 1, 3.0), Err(RoundingError::NoFeasibleFound)));
    }

    #[test]
    fn randomized_unconstrained_single_pass() {
        let prob = flat(vec![1.0, 0.5, 0.2, 1.0, 0.5, 0.2], 3);
        let y = y_from_row(&[0.5, -0.5, -1.0, -1.0, 1.0, -1.0]);
        let res = round_randomized(&y, &prob, &RandomizedOptions::default(), 2.0).unwrap();
        assert_eq!(res.work, 0);
        assert_eq!(res.z[4], 1);
        let again = round_randomized(&y, &prob, &RandomizedOptions::default(), 2.0).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn randomized_reports_no_feasible() {
        let eq = LinearConstraint::new(vec![1.0, 1.0], 2.0);
        let prob = BqpProblem::new(vec![0.0; 4], vec![0.0; 2], vec![vec![0, 1]], vec![eq], vec![]).unwrap();
        let y = y_from_row(&[0.0, 0.0]);
        let opts = RandomizedOptions {
            max_restarts: 2,
            ..RandomizedOptions::default()
        };
        assert!(matches!(round_randomized(&y, &prob, &opts, 1.0), Err(RoundingError::NoFeasibleFound)));
    }

    #[test]
    fn certificate_arithmetic() {
        let prob = flat(vec![98.0], 1);
        let c = certificate(&prob, &[1], 100.0).unwrap();
        assert!((c.delta.unwrap() - 0.98).abs() < 1e-15);
        assert_eq!(certificate(&prob, &[1], -1.0).unwrap().delta, None);
    }
}
