//! JSON and CSV artifacts for an exploration.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{Exploration, HalfPlane};

pub fn to_json(ex: &Exploration) -> Result<String> {
    serde_json::to_string_pretty(ex).map_err(|e| Error::Io(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Exploration> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })
}

fn fmt_half_plane(h: &HalfPlane) -> String {
    let mut s = String::new();
    for (i, a) in h.normal.iter().enumerate() {
        if i == 0 {
            let _ = write!(s, "{a:.6}*x{}", i + 1);
        } else if *a < 0.0 {
            let _ = write!(s, " - {:.6}*x{}", -a, i + 1);
        } else {
            let _ = write!(s, " + {a:.6}*x{}", i + 1);
        }
    }
    if h.offset < 0.0 {
        let _ = write!(s, " - {:.6} <= 0", -h.offset);
    } else {
        let _ = write!(s, " + {:.6} <= 0", h.offset);
    }
    s
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per region: label, structure, description and its bounds.
pub fn regions_csv(ex: &Exploration) -> String {
    let mut out =
        String::from("label,structure,description,lower,upper,inequalities,grid_points\n");
    for r in &ex.regions {
        let (lo, hi) = r.interval.map_or((String::new(), String::new()), |(a, b)| {
            (format!("{a:.6}"), format!("{b:.6}"))
        });
        let ineq: Vec<String> = r.inequalities.iter().map(fmt_half_plane).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.label,
            quote(&r.structure.to_string()),
            quote(&r.description),
            lo,
            hi,
            quote(&ineq.join("; ")),
            r.grid_points
        );
    }
    for (a, b) in &ex.infeasible_intervals {
        let _ = writeln!(out, "infeasible,,,{a:.6},{b:.6},,");
    }
    out
}

/// One row per fitted switching time, coefficients in graded-lex order.
pub fn fits_csv(ex: &Exploration) -> String {
    let mut out = String::from("region,event,degree,r2,samples,coefficients,expression\n");
    for r in &ex.regions {
        for (s, f) in r.t_s_fit.iter().enumerate() {
            let coeffs: Vec<String> = f.coeffs.iter().map(|c| format!("{c:.6}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{}",
                r.label,
                r.structure.events()[s],
                f.degree,
                f.r2,
                f.samples,
                quote(&coeffs.join(" ")),
                quote(&f.to_expression())
            );
        }
    }
    out
}
