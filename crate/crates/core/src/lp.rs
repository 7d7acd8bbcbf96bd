//! Small dense linear programs on top of `microlp`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

/// `min cᵀx` subject to `A_le x ≤ b_le`, `A_eq x = b_eq` and per-variable bounds.
#[derive(Debug, Clone, Default)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
}

/// Optimum of a [`DenseLp`]; `None` when infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOptimum {
    pub value: f64,
    pub x: Vec<f64>,
}

impl DenseLp {
    pub fn new(objective: Vec<f64>, bounds: Vec<(f64, f64)>) -> Self {
        DenseLp {
            objective,
            bounds,
            le: Vec::new(),
            eq: Vec::new(),
        }
    }

    pub fn solve(&self) -> Result<Option<LpOptimum>> {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| lp.add_var(c, b))
            .collect();
        let terms = |row: &[f64]| -> Vec<(microlp::Variable, f64)> {
            row.iter()
                .zip(&vars)
                .filter(|(v, _)| **v != 0.0)
                .map(|(&v, &x)| (x, v))
                .collect()
        };
        for (row, rhs) in &self.le {
            let t = terms(row);
            if t.is_empty() {
                if *rhs < -1e-12 {
                    return Ok(None);
                }
                continue;
            }
            lp.add_constraint(t, ComparisonOp::Le, *rhs);
        }
        for (row, rhs) in &self.eq {
            let t = terms(row);
            if t.is_empty() {
                if rhs.abs() > 1e-12 {
                    return Ok(None);
                }
                continue;
            }
            lp.add_constraint(t, ComparisonOp::Eq, *rhs);
        }
        match lp.solve() {
            Ok(outcome) => match outcome.solution() {
                Some(sol) => Ok(Some(LpOptimum {
                    value: sol.objective(),
                    x: vars.iter().map(|&v| sol.var_value(v)).collect(),
                })),
                None => Err(Error::Degenerate("linear program interrupted".into())),
            },
            Err(microlp::Error::Infeasible) => Ok(None),
            Err(microlp::Error::Unbounded) => {
                Err(Error::Degenerate("linear program unbounded".into()))
            }
            Err(e) => Err(Error::Degenerate(format!("linear program failed: {e}"))),
        }
    }
}
