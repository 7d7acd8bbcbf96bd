//! Fine-grid reference solver for long horizons.
//!
//! The sparse discrete problem is solved for a guessed per-stage active set by
//! a Riccati recursion in which each active row is an equality on `(x_k, u_k)`;
//! the guess is then updated by a primal-dual active-set rule until it is stable.

use nalgebra::{DMatrix, DVector};

use super::zoh;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{ActiveSet, LtiOcProblem};

const MAX_ROUNDS: usize = 200;

/// Solution of the fine discrete problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub steps: usize,
    pub h: f64,
    /// `x₀..x_N`.
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Node multipliers, one `c`-vector per stage.
    pub mu: Vec<DVector<f64>>,
    pub active: Vec<ActiveSet>,
    pub cost: f64,
    pub rounds: usize,
}

impl OracleSolution {
    /// Times where `row` leaves or enters the active set, located by linear
    /// extrapolation of the multiplier density to zero.
    pub fn switch_times(&self, row: usize) -> Vec<f64> {
        let on = |k: usize| self.active[k].contains(row);
        let mu = |k: usize| self.mu[k][row];
        let mut out = Vec::new();
        for k in 0..self.steps.saturating_sub(1) {
            let t = k as f64 * self.h;
            match (on(k), on(k + 1)) {
                (true, false) => {
                    let slope = if k > 0 && on(k - 1) {
                        mu(k - 1) - mu(k)
                    } else {
                        0.0
                    };
                    let frac = if slope > 0.0 {
                        (mu(k) / slope).min(1.0)
                    } else {
                        0.5
                    };
                    out.push(t + frac * self.h);
                }
                (false, true) => {
                    let slope = if k + 2 < self.steps && on(k + 2) {
                        mu(k + 2) - mu(k + 1)
                    } else {
                        0.0
                    };
                    let frac = if slope > 0.0 {
                        (mu(k + 1) / slope).min(1.0)
                    } else {
                        0.5
                    };
                    out.push(t + self.h - frac * self.h);
                }
                _ => {}
            }
        }
        out
    }
}

struct StageLaw {
    // u = d_x x + d_0 + z v
    d_x: DMatrix<f64>,
    d_0: DVector<f64>,
    z: DMatrix<f64>,
    // v = −k_x x − k_0
    k_x: DMatrix<f64>,
    k_0: DVector<f64>,
}

fn rows_of(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Dense oracle at `x0` with `steps` intervals.
pub fn dense_oracle(
    problem: &LtiOcProblem<f64>,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<OracleSolution> {
    if steps == 0 {
        return Err(Error::InvalidProblem(
            "step count must be at least 1".into(),
        ));
    }
    let (n, m, c) = (problem.n(), problem.m(), problem.rows());
    if let Some(row) = (0..c).find(|&i| problem.gu.row(i).amax() == 0.0) {
        return Err(Error::InvalidProblem(format!(
            "row {row} does not involve the input"
        )));
    }
    let h = problem.horizon / steps as f64;
    let (ad, bd) = zoh(&problem.a, &problem.b, h)?;
    let qh = &problem.q * h;
    let rh = &problem.r * h;

    let mut active = vec![ActiveSet::empty(); steps];
    for round in 1..=MAX_ROUNDS {
        // Backward sweep.
        let mut p_mat = problem.p.clone();
        let mut p_vec = DVector::<f64>::zeros(n);
        let mut laws = Vec::with_capacity(steps);
        for k in (0..steps).rev() {
            let rows = active[k].rows();
            let (d_x, d_0, z) = if rows.is_empty() {
                (
                    DMatrix::zeros(m, n),
                    DVector::zeros(m),
                    DMatrix::identity(m, m),
                )
            } else {
                let e = rows_of(&problem.gu, rows);
                let pinv = e
                    .clone()
                    .pseudo_inverse(1e-12)
                    .map_err(|msg| Error::Degenerate(msg.to_string()))?;
                let gx = rows_of(&problem.gx, rows);
                let b = DVector::from_fn(rows.len(), |r, _| problem.bound[rows[r]]);
                (-(&pinv * gx), &pinv * b, linalg::null_space(&e, 1e-12))
            };
            let at = &ad + &bd * &d_x;
            let bt = &bd * &z;
            let ct = &bd * &d_0;
            let pc = &p_mat * &ct + &p_vec;
            let q_xx = &qh + d_x.transpose() * &rh * &d_x + at.transpose() * &p_mat * &at;
            let q_x = d_x.transpose() * &rh * &d_0 + at.transpose() * &pc;
            let (k_x, k_0, q_vx) = if z.ncols() == 0 {
                (
                    DMatrix::zeros(0, n),
                    DVector::zeros(0),
                    DMatrix::zeros(0, n),
                )
            } else {
                let q_vv = z.transpose() * &rh * &z + bt.transpose() * &p_mat * &bt;
                let q_vx = z.transpose() * &rh * &d_x + bt.transpose() * &p_mat * &at;
                let q_v = z.transpose() * &rh * &d_0 + bt.transpose() * &pc;
                let chol = q_vv.cholesky().ok_or_else(|| {
                    Error::Degenerate("stage Hessian not positive definite".into())
                })?;
                (chol.solve(&q_vx), chol.solve(&q_v), q_vx)
            };
            p_mat = &q_xx - q_vx.transpose() * &k_x;
            p_mat = (&p_mat + p_mat.transpose()) * 0.5;
            p_vec = &q_x - q_vx.transpose() * &k_0;
            laws.push(StageLaw {
                d_x,
                d_0,
                z,
                k_x,
                k_0,
            });
        }
        laws.reverse();

        // Forward sweep.
        let mut x = Vec::with_capacity(steps + 1);
        let mut u = Vec::with_capacity(steps);
        x.push(x0.clone());
        for (k, law) in laws.iter().enumerate() {
            let v = -(&law.k_x * &x[k]) - &law.k_0;
            let uk = &law.d_x * &x[k] + &law.d_0 + &law.z * v;
            x.push(&ad * &x[k] + &bd * &uk);
            u.push(uk);
        }

        // Multipliers from the adjoint recursion.
        let mut nu = &problem.p * &x[steps];
        let mut mu = vec![DVector::<f64>::zeros(c); steps];
        for k in (0..steps).rev() {
            let rows = active[k].rows();
            let r = &rh * &u[k] + bd.transpose() * &nu;
            let mut next_nu = &qh * &x[k] + ad.transpose() * &nu;
            if !rows.is_empty() {
                let e = rows_of(&problem.gu, rows);
                let eet = &e * e.transpose();
                let mu_a = -linalg::solve_vec(&eet, &(&e * &r))
                    .ok_or_else(|| Error::Degenerate("dependent active rows".into()))?;
                for (j, &row) in rows.iter().enumerate() {
                    mu[k][row] = mu_a[j];
                }
                next_nu += rows_of(&problem.gx, rows).transpose() * mu_a;
            }
            nu = next_nu;
        }

        // Active-set update.
        let mut changed = false;
        let scale = 1.0 + problem.bound.amax();
        for k in 0..steps {
            let g = problem.constraint_values(&x[k], &u[k]);
            let mut cand: Vec<(usize, f64)> = (0..c)
                .filter_map(|i| {
                    if active[k].contains(i) {
                        (mu[k][i] > 0.0).then_some((i, mu[k][i] / h))
                    } else {
                        (g[i] > 1e-12 * scale).then_some((i, g[i]))
                    }
                })
                .collect();
            cand.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut keep: Vec<usize> = Vec::new();
            for (i, _) in cand {
                let mut trial = keep.clone();
                trial.push(i);
                if trial.len() <= m
                    && linalg::rank(&rows_of(&problem.gu, &trial), 1e-10) == trial.len()
                {
                    keep = trial;
                }
            }
            let next = ActiveSet::new(keep);
            if next != active[k] {
                active[k] = next;
                changed = true;
            }
        }
        if !changed {
            let mut cost = problem.terminal_cost(&x[steps]);
            for k in 0..steps {
                cost += h * problem.running_cost(&x[k], &u[k]);
            }
            return Ok(OracleSolution {
                steps,
                h,
                x,
                u,
                mu,
                active,
                cost,
                rounds: round,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ROUNDS,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt::{discretize_zoh, solve_qp};
    use crate::problem::{integrator_example, two_state_example};
    use approx::assert_abs_diff_eq;

    #[test]
    fn agrees_with_condensed_qp() {
        let p = two_state_example::<f64>();
        let dt = discretize_zoh(&p, 12).unwrap();
        for x0 in [[0.0, 0.5], [-0.95, -1.65], [1.0, -1.5], [0.2, 0.1]] {
            let theta = DVector::from_vec(x0.to_vec());
            let qp = solve_qp(&dt, &theta, None).unwrap();
            let or = dense_oracle(&p, &theta, 12).unwrap();
            assert_abs_diff_eq!(qp.cost, or.cost, epsilon = 1e-10);
            for k in 0..12 {
                assert_abs_diff_eq!(qp.u[k], or.u[k][0], epsilon = 1e-9);
                for i in 0..2 {
                    assert_abs_diff_eq!(qp.lambda[2 * k + i], or.mu[k][i], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn integrator_switch_time() {
        let p = integrator_example::<f64>();
        let or = dense_oracle(&p, &DVector::from_element(1, -0.8), 2000).unwrap();
        let ts = or.switch_times(1);
        assert_eq!(ts.len(), 1);
        assert!((ts[0] - 2.5f64.ln()).abs() < 2e-3);
    }
}
