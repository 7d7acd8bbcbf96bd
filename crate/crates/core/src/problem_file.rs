//! Plain-text problem files.
//!
//! One `key = value` entry per line, `#` starts a comment. Matrices are
//! written row-major in brackets with `;` between rows and `,` (or blanks)
//! between columns; a bracketed value may span several lines.
//!
//! ```text
//! A = [0, -1; -1, 0]
//! B = [1; 0]
//! Q = [1, 0; 0, 1]
//! R = [1]
//! P = [1, 0; 0, 1]
//! Gx = [-1, 1; 1, -1]
//! Gu = [1; -1]
//! b = [1.2, 2]
//! T = 2
//! theta_box = [-2, 2; -2, 2]
//! names = y1, y2
//! ```
//!
//! Required keys: `A B Q R P Gx Gu b T theta_box`; `names` is optional.
//! `b` may be written as a row or a column.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::LtiOcProblem;
use crate::scalar::{lit, to_f64, Real};

const REQUIRED: [&str; 10] = ["A", "B", "Q", "R", "P", "Gx", "Gu", "b", "T", "theta_box"];

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

fn split_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    let mut pending: Option<(String, usize, String)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some((key, start, mut value)) = pending.take() {
            value.push(' ');
            value.push_str(line);
            if bracket_depth(&value) > 0 {
                pending = Some((key, start, value));
            } else {
                out.insert(key, Entry { line: start, value });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim().to_string();
        if out.contains_key(&key) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
        let value = value.trim().to_string();
        if bracket_depth(&value) > 0 {
            pending = Some((key, line_no, value));
        } else {
            out.insert(
                key,
                Entry {
                    line: line_no,
                    value,
                },
            );
        }
    }
    if let Some((key, line, _)) = pending {
        return Err(Error::Parse {
            line,
            msg: format!("unterminated bracket in `{key}`"),
        });
    }
    Ok(out)
}

fn bracket_depth(s: &str) -> i32 {
    s.chars().fold(0, |d, c| match c {
        '[' => d + 1,
        ']' => d - 1,
        _ => d,
    })
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite number `{tok}`"),
        });
    }
    Ok(v)
}

/// Parses `[r0c0, r0c1; r1c0, r1c1]` into rows.
fn parse_matrix(entry: &Entry) -> Result<Vec<Vec<f64>>> {
    let line = entry.line;
    let body = entry.value.trim();
    let inner = body
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Parse {
            line,
            msg: "matrix must be enclosed in [ ]".into(),
        })?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<f64>> = inner
        .split(';')
        .map(|row| {
            row.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| parse_number(t, line))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse {
            line,
            msg: "ragged matrix rows".into(),
        });
    }
    Ok(rows)
}

fn to_matrix<T: Real>(rows: &[Vec<f64>], cols_if_empty: usize) -> DMatrix<T> {
    if rows.is_empty() {
        return DMatrix::zeros(0, cols_if_empty);
    }
    DMatrix::from_row_iterator(
        rows.len(),
        rows[0].len(),
        rows.iter().flatten().map(|v| lit::<T>(*v)),
    )
}

/// Parses a problem from text.
pub fn parse_problem<T: Real>(text: &str) -> Result<LtiOcProblem<T>> {
    let entries = split_entries(text)?;
    let mut by_line: Vec<(&String, &Entry)> = entries.iter().collect();
    by_line.sort_by_key(|(_, e)| e.line);
    for (key, entry) in by_line {
        match key.as_str() {
            "names" => {}
            "T" => {
                parse_number(entry.value.trim(), entry.line)?;
            }
            k if REQUIRED.contains(&k) => {
                parse_matrix(entry)?;
            }
            _ => {
                return Err(Error::Parse {
                    line: entry.line,
                    msg: format!("unknown key `{key}`"),
                })
            }
        }
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("missing key `{key}`"),
            });
        }
    }
    let mat = |k: &str| parse_matrix(&entries[k]);
    let a = mat("A")?;
    let n = a.len();
    let b = mat("B")?;
    let bound_rows = mat("b")?;
    let bound: Vec<f64> = if bound_rows.len() == 1 {
        bound_rows[0].clone()
    } else if bound_rows.iter().all(|r| r.len() == 1) {
        bound_rows.iter().map(|r| r[0]).collect()
    } else {
        return Err(Error::Parse {
            line: entries["b"].line,
            msg: "b must be a vector".into(),
        });
    };
    let m = b.first().map_or(0, Vec::len);
    let t_entry = &entries["T"];
    let horizon = parse_number(t_entry.value.trim(), t_entry.line)?;
    let theta_box: Vec<(T, T)> = mat("theta_box")?
        .iter()
        .map(|r| {
            if r.len() == 2 {
                Ok((lit(r[0]), lit(r[1])))
            } else {
                Err(Error::Parse {
                    line: entries["theta_box"].line,
                    msg: "theta_box rows need `lo, hi`".into(),
                })
            }
        })
        .collect::<Result<_>>()?;
    let problem = LtiOcProblem::new(
        to_matrix(&a, n),
        to_matrix(&b, m),
        to_matrix(&mat("Q")?, n),
        to_matrix(&mat("R")?, m),
        to_matrix(&mat("P")?, n),
        to_matrix(&mat("Gx")?, n),
        to_matrix(&mat("Gu")?, m),
        DVector::from_iterator(bound.len(), bound.iter().map(|v| lit::<T>(*v))),
        lit(horizon),
        theta_box,
    )
    .map_err(|e| match e {
        Error::InvalidProblem(msg) => Error::Parse { line: 0, msg },
        other => other,
    })?;
    match entries.get("names") {
        Some(entry) => {
            let names: Vec<String> = entry
                .value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            problem.with_row_names(names).map_err(|e| Error::Parse {
                line: entry.line,
                msg: e.to_string(),
            })
        }
        None => Ok(problem),
    }
}

/// Reads and parses a problem file.
pub fn load_problem<T: Real>(path: &Path) -> Result<LtiOcProblem<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}

fn write_matrix<T: Real>(m: &DMatrix<T>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            r.iter()
                .map(|v| format!("{}", to_f64(*v)))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    format!("[{}]", rows.join("; "))
}

/// Serialises a problem; `f64` values use the shortest round-trip decimal form.
pub fn write_problem<T: Real>(p: &LtiOcProblem<T>) -> String {
    let bound: Vec<String> = p.bound.iter().map(|v| format!("{}", to_f64(*v))).collect();
    let bx: Vec<String> = p
        .theta_box
        .iter()
        .map(|(l, h)| format!("{}, {}", to_f64(*l), to_f64(*h)))
        .collect();
    let mut out = String::new();
    out.push_str(&format!("A = {}\n", write_matrix(&p.a)));
    out.push_str(&format!("B = {}\n", write_matrix(&p.b)));
    out.push_str(&format!("Q = {}\n", write_matrix(&p.q)));
    out.push_str(&format!("R = {}\n", write_matrix(&p.r)));
    out.push_str(&format!("P = {}\n", write_matrix(&p.p)));
    out.push_str(&format!("Gx = {}\n", write_matrix(&p.gx)));
    out.push_str(&format!("Gu = {}\n", write_matrix(&p.gu)));
    out.push_str(&format!("b = [{}]\n", bound.join(", ")));
    out.push_str(&format!("T = {}\n", to_f64(p.horizon)));
    out.push_str(&format!("theta_box = [{}]\n", bx.join("; ")));
    out.push_str(&format!("names = {}\n", p.row_names.join(", ")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{integrator_example, two_state_example};
    use proptest::prelude::*;

    #[test]
    fn parses_commented_multiline_file() {
        let text = "# integrator\nA = [0]\nB = [-1]\nQ = [1]\nR = [1]\nP = [1]\n\
                    Gx = [1;\n -1;\n 0]  # three rows\nGu = [1; -1; 1]\nb = [1, 1, 2]\nT = 2\n\
                    theta_box = [-2, 2]\nnames = y_max, y_min, u_max\n";
        let p: LtiOcProblem<f64> = parse_problem(text).unwrap();
        assert_eq!(p, integrator_example());
    }

    #[test]
    fn reports_line_of_bad_number() {
        let text = "A = [0]\nB = [x]\n";
        match parse_problem::<f64>(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_and_unknown_keys() {
        assert!(matches!(
            parse_problem::<f64>("A = [0]\n"),
            Err(Error::Parse { .. })
        ));
        let mut text = write_problem(&integrator_example::<f64>());
        text.push_str("extra = 1\n");
        assert!(matches!(
            parse_problem::<f64>(&text),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn example_round_trip() {
        let p = two_state_example::<f64>();
        let back: LtiOcProblem<f64> = parse_problem(&write_problem(&p)).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn decimal_round_trip_is_exact(vals in proptest::collection::vec(-1e6f64..1e6, 4), t in 0.01f64..50.0) {
            let mut p = two_state_example::<f64>();
            p.a[(0, 0)] = vals[0];
            p.a[(1, 0)] = vals[1];
            p.bound[0] = vals[2];
            p.gx[(1, 1)] = vals[3];
            p.horizon = t;
            let back: LtiOcProblem<f64> = parse_problem(&write_problem(&p)).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
