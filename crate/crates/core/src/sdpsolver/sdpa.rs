//! SDPA sparse format (`.dat-s`).
//!
//! The problem is written in SDPA's dual form: `F0 = A`, `F_j = B_j`,
//! `c_j = b_j`. Inequalities add a diagonal block whose entry `l` is the slack
//! of inequality `l`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{SdpConstraint, SdpError, SdpProblem, SymSparse};

/// Renders `prob` as `.dat-s` text. Indices are 1-based, upper triangle only.
pub fn to_sdpa(prob: &SdpProblem) -> String {
    let n = prob.dim();
    let neq = prob.equalities().len();
    let nin = prob.inequalities().len();
    let mut out = String::new();
    writeln!(out, "\"maximize A.Y subject to B_j.Y = b_j, C_l.Y + s_l = d_l\"").unwrap();
    writeln!(out, "{}", neq + nin).unwrap();
    if nin > 0 {
        writeln!(out, "2").unwrap();
        writeln!(out, "{n} -{nin}").unwrap();
    } else {
        writeln!(out, "1").unwrap();
        writeln!(out, "{n}").unwrap();
    }
    let rhs: Vec<String> = prob
        .equalities()
        .iter()
        .chain(prob.inequalities())
        .map(|c| format!("{:?}", c.rhs))
        .collect();
    writeln!(out, "{}", rhs.join(" ")).unwrap();
    let a = prob.objective();
    for i in 0..n {
        for j in i..n {
            if a[(i, j)] != 0.0 {
                writeln!(out, "0 1 {} {} {:?}", i + 1, j + 1, a[(i, j)]).unwrap();
            }
        }
    }
    for (k, c) in prob.equalities().iter().chain(prob.inequalities()).enumerate() {
        for &(i, j, v) in c.matrix.entries() {
            writeln!(out, "{} 1 {} {} {:?}", k + 1, i + 1, j + 1, v).unwrap();
        }
    }
    for l in 0..nin {
        writeln!(out, "{} 2 {} {} 1.0", neq + l + 1, l + 1, l + 1).unwrap();
    }
    out
}

pub fn write_sdpa(prob: &SdpProblem, path: &Path) -> Result<(), SdpError> {
    std::fs::write(path, to_sdpa(prob))?;
    Ok(())
}

fn parse_err(msg: impl Into<String>) -> SdpError {
    SdpError::Parse(msg.into())
}

/// Reads `.dat-s` text with one dense block and an optional diagonal block;
/// constraints touching the diagonal block become inequalities.
pub fn from_sdpa(text: &str) -> Result<SdpProblem, SdpError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let clean = |l: &str| l.replace([',', '{', '}', '(', ')'], " ");
    let mut header = |what: &str| lines.next().map(clean).ok_or_else(|| parse_err(format!("missing {what}")));
    let m: usize = header("constraint count")?
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err("bad constraint count"))?;
    let nblocks: usize = header("block count")?
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err("bad block count"))?;
    let sizes: Vec<i64> = header("block structure")?
        .split_whitespace()
        .map(|t| t.parse::<i64>().map_err(|_| parse_err("bad block size")))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nblocks || !(1..=2).contains(&nblocks) || sizes[0] <= 0 || (nblocks == 2 && sizes[1] >= 0) {
        return Err(parse_err("expected one dense block and an optional diagonal block"));
    }
    let n = sizes[0] as usize;
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    while rhs.len() < m {
        let line = header("right-hand side")?;
        for t in line.split_whitespace() {
            rhs.push(t.parse().map_err(|_| parse_err(format!("bad number `{t}`")))?);
        }
    }
    if rhs.len() != m {
        return Err(parse_err("right-hand side length differs from constraint count"));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut trips: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); m];
    let mut is_ineq = vec![false; m];
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 5 {
            return Err(parse_err(format!("short entry line `{line}`")));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err(format!("bad index `{s}`")));
        let (k, blk, i, j) = (idx(t[0])?, idx(t[1])?, idx(t[2])?, idx(t[3])?);
        let v: f64 = t[4].parse().map_err(|_| parse_err(format!("bad value `{}`", t[4])))?;
        if k > m || blk == 0 || blk > nblocks || i == 0 || j == 0 {
            return Err(parse_err(format!("entry out of range `{line}`")));
        }
        match (k, blk) {
            (0, 1) => {
                a[(i - 1, j - 1)] = v;
                a[(j - 1, i - 1)] = v;
            }
            (0, _) => {}
            (_, 1) => trips[k - 1].push((i - 1, j - 1, v)),
            (_, _) => is_ineq[k - 1] = true,
        }
    }
    let mut eqs = Vec::new();
    let mut ineqs = Vec::new();
    for (k, t) in trips.into_iter().enumerate() {
        let c = SdpConstraint::new(SymSparse::new(n, t)?, rhs[k]);
        if is_ineq[k] {
            ineqs.push(c);
        } else {
            eqs.push(c);
        }
    }
    SdpProblem::new(a, eqs, ineqs)
}

pub fn read_sdpa(path: &Path) -> Result<SdpProblem, SdpError> {
    from_sdpa(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SdpProblem {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.1, -2.5, 1.0 / 3.0, 0.0, 1.0 / 3.0, 0.0]);
        let eqs = (0..3)
            .map(|i| SdpConstraint::new(SymSparse::new(3, [(i, i, 1.0)]).unwrap(), 1.0))
            .collect();
        let ineq = SdpConstraint::new(SymSparse::new(3, [(0, 1, 0.5), (0, 2, 0.5)]).unwrap(), -1e-17);
        SdpProblem::new(a, eqs, vec![ineq]).unwrap()
    }

    #[test]
    fn header_layout() {
        let text = to_sdpa(&sample());
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with('"'));
        assert_eq!(lines[1], "4");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "3 -1");
        assert_eq!(lines[4], "1.0 1.0 1.0 -1e-17");
        assert!(lines.contains(&"4 2 1 1 1.0"));
    }

    #[test]
    fn round_trip_is_exact() {
        let prob = sample();
        let back = from_sdpa(&to_sdpa(&prob)).unwrap();
        assert_eq!(back, prob);
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_sdpa("1\n1\n2\n1.0\n1 1 3 3 1.0\n").is_err());
        assert!(from_sdpa("").is_err());
    }
}
