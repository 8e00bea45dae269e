//! CPLEX LP text output for [`MilpModel`] and a reader for the same subset.
//!
//! Numbers carry 17 significant digits so every `f64` survives the round
//! trip. Long rows wrap after four terms.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::{MilpError, MilpModel, MilpRow, Sense};

const TERMS_PER_LINE: usize = 4;

/// `d.dddddddddddddddde+XX`, always signed exponent with two digits or more.
fn number(v: f64) -> String {
    let s = format!("{:.16e}", v);
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

fn write_terms(out: &mut String, model: &MilpModel, terms: &[(usize, f64)]) {
    for (k, (var, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n  ");
        }
        let sign = if c.is_sign_negative() { '-' } else { '+' };
        out.push_str(&format!(" {sign} {} {}", number(c.abs()), model.var_name(*var)));
    }
}

/// Renders the model as LP text.
pub fn export_lp(model: &MilpModel) -> String {
    let n = model.n_binary();
    let mut out = String::new();
    out.push_str(&format!(
        "\\ linearized BQP: {n} binaries, {} auxiliaries\n",
        model.n_vars() - n
    ));
    out.push_str("Maximize\n");
    if model.objective().is_empty() {
        out.push_str("\\ objective is the constant 0\n");
    }
    out.push_str(" obj:");
    write_terms(&mut out, model, model.objective());
    out.push('\n');
    out.push_str("Subject To\n");
    for row in model.rows() {
        out.push_str(&format!(" {}:", row.name));
        write_terms(&mut out, model, &row.terms);
        out.push_str(&format!(" {} {}\n", row.sense.symbol(), number(row.rhs)));
    }
    out.push_str("Bounds\n");
    for v in n..model.n_vars() {
        out.push_str(&format!(" {} >= 0\n", model.var_name(v)));
    }
    out.push_str("Binary\n");
    for v in 0..n {
        out.push_str(&format!(" {}\n", model.var_name(v)));
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(model: &MilpModel, path: &Path) -> Result<(), MilpError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(export_lp(model).as_bytes())?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Start,
    Objective,
    Constraints,
    Bounds,
    Binary,
    End,
}

struct Pending {
    line: usize,
    name: String,
    tokens: Vec<String>,
}

fn err(line: usize, msg: impl Into<String>) -> MilpError {
    MilpError::Parse { line, msg: msg.into() }
}

type ParsedRow = (Vec<(String, f64)>, Option<(Sense, f64)>);

/// `[+|-] coef var` triples, then optionally `sense rhs`.
fn parse_terms(line: usize, tokens: &[String]) -> Result<ParsedRow, MilpError> {
    let mut terms = Vec::new();
    let mut k = 0;
    while k < tokens.len() {
        let t = tokens[k].as_str();
        if let Some(sense) = match t {
            "<=" => Some(Sense::Le),
            ">=" => Some(Sense::Ge),
            "=" => Some(Sense::Eq),
            _ => None,
        } {
            let rhs = tokens
                .get(k + 1)
                .ok_or_else(|| err(line, "missing right-hand side"))?
                .parse::<f64>()
                .map_err(|e| err(line, format!("right-hand side: {e}")))?;
            if k + 2 != tokens.len() {
                return Err(err(line, "tokens after right-hand side"));
            }
            return Ok((terms, Some((sense, rhs))));
        }
        let sign = match t {
            "+" => 1.0,
            "-" => -1.0,
            _ => return Err(err(line, format!("expected sign, found `{t}`"))),
        };
        let (Some(c), Some(var)) = (tokens.get(k + 1), tokens.get(k + 2)) else {
            return Err(err(line, "incomplete term"));
        };
        let c: f64 = c.parse().map_err(|e| err(line, format!("coefficient `{c}`: {e}")))?;
        terms.push((var.clone(), sign * c));
        k += 3;
    }
    Ok((terms, None))
}

/// Variable index of `z_i` / `zb_i_j` given `n` binaries.
fn resolve(name: &str, n: usize, line: usize) -> Result<usize, MilpError> {
    let bad = || err(line, format!("unknown variable `{name}`"));
    if let Some(rest) = name.strip_prefix("zb_") {
        let (i, j) = rest.split_once('_').ok_or_else(bad)?;
        let (i, j): (usize, usize) = (i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?);
        if i == 0 || i >= j || j > n {
            return Err(bad());
        }
        Ok(super::pair_index(n, i - 1, j - 1))
    } else if let Some(rest) = name.strip_prefix("z_") {
        let i: usize = rest.parse().map_err(|_| bad())?;
        if i == 0 || i > n {
            return Err(bad());
        }
        Ok(i - 1)
    } else {
        Err(bad())
    }
}

/// Reads LP text written by [`export_lp`].
pub fn parse_lp(text: &str) -> Result<MilpModel, MilpError> {
    let mut section = Section::Start;
    let mut objective: Option<Pending> = None;
    let mut rows: Vec<Pending> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut bounded: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('\\').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let next = match content.to_ascii_lowercase().as_str() {
            "maximize" => Some(Section::Objective),
            "subject to" => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "binary" => Some(Section::Binary),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(s) = next {
            if s as u8 <= section as u8 {
                return Err(err(line, "sections out of order"));
            }
            section = s;
            continue;
        }
        let mut tokens: Vec<String> = content.split_whitespace().map(str::to_string).collect();
        match section {
            Section::Start => return Err(err(line, "content before `Maximize`")),
            Section::End => return Err(err(line, "content after `End`")),
            Section::Objective | Section::Constraints => {
                if let Some(label) = tokens.first().and_then(|t| t.strip_suffix(':')) {
                    let p = Pending {
                        line,
                        name: label.to_string(),
                        tokens: tokens.split_off(1),
                    };
                    if section == Section::Objective {
                        if objective.is_some() {
                            return Err(err(line, "second objective"));
                        }
                        objective = Some(p);
                    } else {
                        rows.push(p);
                    }
                } else {
                    let target = if section == Section::Objective {
                        objective.as_mut()
                    } else {
                        rows.last_mut()
                    };
                    target.ok_or_else(|| err(line, "continuation without a row"))?.tokens.extend(tokens);
                }
            }
            Section::Bounds => {
                if tokens.len() != 3 || tokens[1] != ">=" || tokens[2].parse::<f64>() != Ok(0.0) {
                    return Err(err(line, "only `var >= 0` bounds are supported"));
                }
                bounded.push(tokens.swap_remove(0));
            }
            Section::Binary => binaries.extend(tokens),
        }
    }
    if section != Section::End {
        return Err(err(text.lines().count(), "missing `End`"));
    }

    let n = binaries.len();
    for (k, b) in binaries.iter().enumerate() {
        if *b != format!("z_{}", k + 1) {
            return Err(err(0, format!("binary `{b}` out of sequence")));
        }
    }
    for b in &bounded {
        let v = resolve(b, n, 0)?;
        if v < n {
            return Err(err(0, format!("bound on binary `{b}`")));
        }
    }
    let objective = objective.ok_or_else(|| err(0, "missing objective"))?;
    let (terms, tail) = parse_terms(objective.line, &objective.tokens)?;
    if tail.is_some() {
        return Err(err(objective.line, "objective with a sense"));
    }
    let obj = resolve_terms(terms, n, objective.line)?;
    let mut out_rows = Vec::with_capacity(rows.len());
    for p in rows {
        let (terms, tail) = parse_terms(p.line, &p.tokens)?;
        let (sense, rhs) = tail.ok_or_else(|| err(p.line, "row without a sense"))?;
        out_rows.push(MilpRow {
            name: p.name,
            terms: resolve_terms(terms, n, p.line)?,
            sense,
            rhs,
        });
    }
    MilpModel::new(n, obj, out_rows)
}

fn resolve_terms(terms: Vec<(String, f64)>, n: usize, line: usize) -> Result<Vec<(usize, f64)>, MilpError> {
    let mut seen: HashMap<usize, ()> = HashMap::new();
    let mut out = Vec::with_capacity(terms.len());
    for (name, c) in terms {
        let v = resolve(&name, n, line)?;
        if seen.insert(v, ()).is_some() {
            return Err(err(line, format!("`{name}` repeated")));
        }
        out.push((v, c));
    }
    Ok(out)
}

pub fn read_lp(path: &Path) -> Result<MilpModel, MilpError> {
    parse_lp(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqp::{BqpProblem, LinearConstraint};
    use crate::milp::linearize;
    use proptest::prelude::*;

    #[test]
    fn number_format() {
        assert_eq!(number(1.5), "1.5000000000000000e+00");
        assert_eq!(number(-0.001), "-1.0000000000000000e-03");
        assert_eq!(number(1e100), "1.0000000000000000e+100");
        assert_eq!(number(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn empty_objective() {
        let prob = BqpProblem::new(vec![0.0; 4], vec![0.0; 2], vec![vec![0, 1]], vec![], vec![]).unwrap();
        let model = linearize(&prob).unwrap();
        let text = export_lp(&model);
        assert!(text.contains("\\ objective is the constant 0\n obj:\n"));
        assert_eq!(parse_lp(&text).unwrap(), model);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(parse_lp("Maximize\n obj: + 1 z_1\nBinary\n z_1\n").is_err());
        assert!(parse_lp("Maximize\n obj: + 1 z_2\nSubject To\nBinary\n z_1\nEnd\n").is_err());
        assert!(parse_lp("Maximize\n obj: 1 z_1\nBinary\n z_1\nEnd\n").is_err());
        assert!(parse_lp("Subject To\nMaximize\n obj:\nEnd\n").is_err());
    }

    proptest! {
        #[test]
        fn export_then_parse_is_identity(
            k in 1usize..=3,
            m in 1usize..=3,
            q in proptest::collection::vec(-1e6f64..1e6, 81),
            r in proptest::collection::vec(-1e3f64..1e3, 9),
            rhs in -5.0f64..5.0,
        ) {
            let n = m * k;
            let q: Vec<f64> = q[..n * n].to_vec();
            let blocks = (0..m).map(|b| (b * k..(b + 1) * k).collect()).collect();
            let coeffs: Vec<f64> = r[..n].iter().map(|v| v / 7.0).collect();
            let prob = BqpProblem::new(
                q,
                r[..n].to_vec(),
                blocks,
                vec![LinearConstraint::new(coeffs.clone(), rhs)],
                vec![LinearConstraint::new(coeffs, -rhs)],
            )
            .unwrap();
            let model = linearize(&prob).unwrap();
            let text = export_lp(&model);
            let back = parse_lp(&text).unwrap();
            prop_assert_eq!(&back, &model);
            prop_assert_eq!(export_lp(&back), text);
        }
    }
}
