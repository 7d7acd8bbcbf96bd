//! Primal active-set method for the strictly convex condensed QP
//! `min ½UᵀHU + fᵀU  s.t.  GU ≤ w`.
//!
//! A feasible start comes from the warm working set when its equality
//! optimum is feasible, otherwise from a phase-one LP.

use nalgebra::{DMatrix, DVector};

use super::DtProblem;
use crate::error::{Error, Result};
use crate::lp::DenseLp;
use crate::problem::ActiveSet;

/// Multipliers above this are strictly active.
pub const STRICT_TOL: f64 = 1e-10;
/// Slack below this counts as touching.
pub const TOUCH_TOL: f64 = 1e-9;

/// Point solution of the QP at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// Full multiplier vector over all stacked rows.
    pub lambda: DVector<f64>,
    /// Rows with strictly positive multipliers.
    pub active: ActiveSet,
    /// Rows with zero slack but zero multiplier.
    pub weak: Vec<usize>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

struct Qp<'a> {
    h_inv: &'a DMatrix<f64>,
    h: &'a DMatrix<f64>,
    f: DVector<f64>,
    g: &'a DMatrix<f64>,
    w: DVector<f64>,
}

impl Qp<'_> {
    /// Equality-constrained optimum on working set `ws` with its multipliers.
    fn eqp(&self, ws: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let free = -(self.h_inv * &self.f);
        if ws.is_empty() {
            return Some((free, DVector::zeros(0)));
        }
        let gw = DMatrix::from_fn(ws.len(), self.g.ncols(), |r, c| self.g[(ws[r], c)]);
        let hg = self.h_inv * gw.transpose();
        let schur = &gw * &hg;
        let rhs = DVector::from_fn(ws.len(), |r, _| self.w[ws[r]]) - &gw * &free;
        let lam = -schur.cholesky()?.solve(&rhs);
        let u = free - hg * &lam;
        Some((u, lam))
    }

    fn slack(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.w - self.g * u
    }

    fn phase_one(&self) -> Result<Option<DVector<f64>>> {
        let (rows, vars) = (self.g.nrows(), self.g.ncols());
        let mut objective = vec![0.0; vars];
        objective.push(1.0);
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); vars];
        bounds.push((0.0, f64::INFINITY));
        let mut lp = DenseLp::new(objective, bounds);
        for r in 0..rows {
            let mut row: Vec<f64> = self.g.row(r).iter().copied().collect();
            row.push(-1.0);
            lp.le.push((row, self.w[r]));
        }
        let Some(opt) = lp.solve()? else {
            return Ok(None);
        };
        let scale = 1.0 + self.w.amax();
        if opt.value > 1e-9 * scale {
            return Ok(None);
        }
        Ok(Some(DVector::from_column_slice(&opt.x[..vars])))
    }

    /// Linearly independent subset of the touching rows at `u`.
    fn touching_basis(&self, u: &DVector<f64>) -> Vec<usize> {
        let slack = self.slack(u);
        let mut ws: Vec<usize> = Vec::new();
        for r in 0..self.g.nrows() {
            if slack[r].abs() <= TOUCH_TOL * (1.0 + self.w[r].abs()) && ws.len() < self.g.ncols() {
                let mut trial = ws.clone();
                trial.push(r);
                let gw =
                    DMatrix::from_fn(trial.len(), self.g.ncols(), |i, c| self.g[(trial[i], c)]);
                if crate::linalg::rank(&gw, 1e-10) == trial.len() {
                    ws = trial;
                }
            }
        }
        ws
    }

    fn solve(
        &self,
        warm: Option<&ActiveSet>,
    ) -> Result<(DVector<f64>, Vec<usize>, DVector<f64>, usize)> {
        let (rows, vars) = (self.g.nrows(), self.g.ncols());
        let feasible = |u: &DVector<f64>| self.slack(u).iter().all(|&s| s >= -TOUCH_TOL);
        let mut start = None;
        for ws in [warm.map(|a| a.rows().to_vec()), Some(Vec::new())]
            .into_iter()
            .flatten()
        {
            if let Some((u, lam)) = self.eqp(&ws) {
                if feasible(&u) {
                    if lam.iter().all(|&l| l >= -STRICT_TOL) {
                        return Ok((u, ws, lam, 0));
                    }
                    start = Some((u, ws));
                    break;
                }
            }
        }
        let (mut u, mut ws) = match start {
            Some(s) => s,
            None => {
                let u = self.phase_one()?.ok_or(Error::Infeasible { row: None })?;
                let ws = self.touching_basis(&u);
                (u, ws)
            }
        };

        let cap = 20 * (rows + vars) + 100;
        for iteration in 1..=cap {
            let (target, lam) = self.eqp(&ws).ok_or_else(|| Error::SingularKkt {
                rows: ws.clone(),
                condition: f64::INFINITY,
            })?;
            let p = &target - &u;
            if p.amax() <= 1e-13 * (1.0 + u.amax()) {
                let (k, &most) = match lam.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
                    Some(v) => v,
                    None => return Ok((target, ws, lam, iteration)),
                };
                if most >= -STRICT_TOL {
                    return Ok((target, ws, lam, iteration));
                }
                ws.remove(k);
                u = target;
                continue;
            }
            let gp = self.g * &p;
            let slack = self.slack(&u);
            let mut alpha = 1.0;
            let mut blocking = None;
            for r in 0..rows {
                if ws.contains(&r) || gp[r] <= 1e-14 {
                    continue;
                }
                let ratio = (slack[r].max(0.0)) / gp[r];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(r);
                }
            }
            u += p * alpha;
            if let Some(r) = blocking {
                let pos = ws.partition_point(|&x| x < r);
                ws.insert(pos, r);
            }
        }
        Err(Error::NoConvergence {
            iterations: cap,
            residual: f64::NAN,
        })
    }
}

fn kkt_residual(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    w: &DVector<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let stationarity = (h * u + f + g.transpose() * lambda).amax();
    let slack = w - g * u;
    let primal = slack.iter().fold(0.0f64, |m, &s| m.max(-s));
    let dual = lambda.iter().fold(0.0f64, |m, &l| m.max(-l));
    let comp = slack
        .iter()
        .zip(lambda.iter())
        .fold(0.0f64, |m, (s, l)| m.max((s * l).abs()));
    stationarity.max(primal).max(dual).max(comp)
}

/// Solves the condensed QP at `theta`, optionally warm-started from an active set.
pub fn solve_qp(
    dt: &DtProblem<f64>,
    theta: &DVector<f64>,
    warm: Option<&ActiveSet>,
) -> Result<QpSolution> {
    let h_inv = dt
        .hc
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("condensed Hessian is not positive definite".into()))?
        .inverse();
    solve_qp_with(dt, &h_inv, theta, warm)
}

/// As [`solve_qp`] with a precomputed `Hc⁻¹`.
pub fn solve_qp_with(
    dt: &DtProblem<f64>,
    h_inv: &DMatrix<f64>,
    theta: &DVector<f64>,
    warm: Option<&ActiveSet>,
) -> Result<QpSolution> {
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("non-finite parameter".into()));
    }
    let qp = Qp {
        h_inv,
        h: &dt.hc,
        f: dt.linear_term(theta),
        g: &dt.gc,
        w: dt.rhs(theta),
    };
    let (u, ws, lam, iterations) = qp.solve(warm)?;
    let rows = dt.rows();
    let mut lambda = DVector::zeros(rows);
    for (k, &r) in ws.iter().enumerate() {
        lambda[r] = lam[k].max(0.0);
    }
    let slack = qp.slack(&u);
    let active = ActiveSet::new(ws.iter().copied().filter(|&r| lambda[r] > STRICT_TOL));
    let weak = (0..rows)
        .filter(|&r| !active.contains(r) && slack[r].abs() <= TOUCH_TOL * (1.0 + qp.w[r].abs()))
        .collect();
    let kkt = kkt_residual(qp.h, &qp.f, qp.g, &qp.w, &u, &lambda);
    let cost = dt.cost(&u, theta);
    Ok(QpSolution {
        u,
        lambda,
        active,
        weak,
        cost,
        kkt_residual: kkt,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt::discretize_zoh;
    use crate::problem::integrator_example;
    use approx::assert_abs_diff_eq;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn origin_is_unconstrained() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        let s = solve_qp(&dt, &v(0.0), None).unwrap();
        assert!(s.active.is_empty());
        assert!(s.u.amax() < 1e-14);
    }

    #[test]
    fn unconstrained_gain() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        let s = solve_qp(&dt, &v(0.3), None).unwrap();
        assert!(s.active.is_empty());
        assert_abs_diff_eq!(s.u[0], 0.815 * 0.3, epsilon = 1e-3);
        assert!(s.kkt_residual <= 1e-9);
    }

    #[test]
    fn infeasible_below_lower_bound() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        assert!(matches!(
            solve_qp(&dt, &v(-1.6), None),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn lower_output_active_throughout() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        let s = solve_qp(&dt, &v(-1.2), None).unwrap();
        // u_k = −1.4ᵏ(θ + 1)
        for k in 0..5 {
            assert_abs_diff_eq!(s.u[k], -(1.4f64).powi(k as i32) * (-0.2), epsilon = 1e-10);
        }
        assert!(s.kkt_residual <= 1e-9);
        let warm = solve_qp(&dt, &v(-1.19), Some(&s.active)).unwrap();
        assert_eq!(warm.iterations, 0);
    }
}
