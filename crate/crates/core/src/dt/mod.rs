//! Discrete-time counterpart: zero-order-hold dynamics, forward-Euler cost,
//! node-wise constraints, condensed into a parametric QP in the input
//! sequence `U = (u₀, …, u_{N−1})`:
//!
//! ```text
//! J(U, θ) = ½ UᵀHc U + θᵀFc U + ½ θᵀYc θ,    Gc U ≤ wc + Sc θ.
//! ```

pub mod compare;
pub mod oracle;
pub mod partition;
pub mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::LtiOcProblem;
use crate::scalar::{lit, Real};

pub use compare::{compare_ct_dt, overlay_series, ComparisonReport, CostRow, CountRow, OverlayRow};
pub use oracle::{dense_oracle, OracleSolution};
pub use partition::{
    build_region, enumerate_partition, feasible_bounds, partition_csv, DtCriticalRegion,
    DtPartition, PartitionOptions, Strategy,
};
pub use qp::{solve_qp, QpSolution};

/// Condensed discrete-time problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DtProblem<T: Real> {
    pub ad: DMatrix<T>,
    pub bd: DMatrix<T>,
    pub steps: usize,
    pub h: T,
    pub hc: DMatrix<T>,
    pub fc: DMatrix<T>,
    pub yc: DMatrix<T>,
    pub gc: DMatrix<T>,
    pub wc: DVector<T>,
    pub sc: DMatrix<T>,
    /// `x_k = Φ_k θ + Γ_k U`, stacked for `k = 0..=N`.
    pub phi: DMatrix<T>,
    pub gamma: DMatrix<T>,
    pub theta_box: Vec<(T, T)>,
    /// Constraint rows per node.
    pub rows_per_step: usize,
    n: usize,
    m: usize,
}

impl<T: Real> DtProblem<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of decision variables `N·m`.
    pub fn vars(&self) -> usize {
        self.steps * self.m
    }

    /// Total stacked constraint rows `N·c`.
    pub fn rows(&self) -> usize {
        self.gc.nrows()
    }

    /// `(step, row)` of stacked constraint `i`.
    pub fn row_origin(&self, i: usize) -> (usize, usize) {
        (i / self.rows_per_step, i % self.rows_per_step)
    }

    /// Linear term `Fcᵀθ` of the QP in `U`.
    pub fn linear_term(&self, theta: &DVector<T>) -> DVector<T> {
        self.fc.transpose() * theta
    }

    /// Right-hand side `wc + Sc θ`.
    pub fn rhs(&self, theta: &DVector<T>) -> DVector<T> {
        &self.wc + &self.sc * theta
    }

    pub fn cost(&self, u: &DVector<T>, theta: &DVector<T>) -> T {
        let half: T = lit(0.5);
        half * u.dot(&(&self.hc * u))
            + theta.dot(&(&self.fc * u))
            + half * theta.dot(&(&self.yc * theta))
    }

    /// State sequence `x₀..x_N` stacked.
    pub fn states(&self, u: &DVector<T>, theta: &DVector<T>) -> DVector<T> {
        &self.phi * theta + &self.gamma * u
    }

    pub fn state(&self, u: &DVector<T>, theta: &DVector<T>, k: usize) -> DVector<T> {
        let n = self.n;
        self.phi.rows(k * n, n) * theta + self.gamma.rows(k * n, n) * u
    }
}

/// `(Ad, Bd)` from `exp([[A, B], [0, 0]]·h)`.
pub fn zoh<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, h: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::<T>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = linalg::expm_scaled(&aug, h)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Builds the condensed problem with `steps` intervals of length `T/steps`.
pub fn discretize_zoh<T: Real>(problem: &LtiOcProblem<T>, steps: usize) -> Result<DtProblem<T>> {
    if steps == 0 {
        return Err(Error::InvalidProblem(
            "step count must be at least 1".into(),
        ));
    }
    let (n, m, c) = (problem.n(), problem.m(), problem.rows());
    let h = problem.horizon / lit(steps as f64);
    let (ad, bd) = zoh(&problem.a, &problem.b, h)?;
    let nu = steps * m;

    let mut phi = DMatrix::<T>::zeros((steps + 1) * n, n);
    let mut gamma = DMatrix::<T>::zeros((steps + 1) * n, nu);
    let mut power = DMatrix::<T>::identity(n, n);
    for k in 0..=steps {
        phi.view_mut((k * n, 0), (n, n)).copy_from(&power);
        power = &ad * power;
    }
    for k in 1..=steps {
        let prev = gamma.rows((k - 1) * n, n).into_owned();
        let mut row = &ad * prev;
        let mut tail = row.view_mut((0, (k - 1) * m), (n, m));
        tail += &bd;
        gamma.view_mut((k * n, 0), (n, nu)).copy_from(&row);
    }

    // Block-diagonal weights: h·Q on x₀..x_{N−1}, P on x_N, h·R on every input.
    let mut qbar = DMatrix::<T>::zeros((steps + 1) * n, (steps + 1) * n);
    for k in 0..steps {
        qbar.view_mut((k * n, k * n), (n, n))
            .copy_from(&(&problem.q * h));
    }
    qbar.view_mut((steps * n, steps * n), (n, n))
        .copy_from(&problem.p);
    let mut rbar = DMatrix::<T>::zeros(nu, nu);
    for k in 0..steps {
        rbar.view_mut((k * m, k * m), (m, m))
            .copy_from(&(&problem.r * h));
    }
    let qg = &qbar * &gamma;
    let mut hc = gamma.transpose() * &qg + rbar;
    hc = (&hc + hc.transpose()) * lit::<T>(0.5);
    let fc = phi.transpose() * &qg;
    let yc = phi.transpose() * &qbar * &phi;

    let rows = steps * c;
    let mut gc = DMatrix::<T>::zeros(rows, nu);
    let mut sc = DMatrix::<T>::zeros(rows, n);
    let mut wc = DVector::<T>::zeros(rows);
    for k in 0..steps {
        let gx_gamma = &problem.gx * gamma.rows(k * n, n);
        let gx_phi = &problem.gx * phi.rows(k * n, n);
        for i in 0..c {
            let r = k * c + i;
            gc.set_row(r, &gx_gamma.row(i));
            for j in 0..m {
                gc[(r, k * m + j)] += problem.gu[(i, j)];
            }
            sc.set_row(r, &(-gx_phi.row(i)));
            wc[r] = problem.bound[i];
        }
    }

    Ok(DtProblem {
        ad,
        bd,
        steps,
        h,
        hc,
        fc,
        yc,
        gc,
        wc,
        sc,
        phi,
        gamma,
        theta_box: problem.theta_box.clone(),
        rows_per_step: c,
        n,
        m,
    })
}

/// Exact continuous-time cost and worst constraint value of a zero-order-hold
/// input sequence applied from `x0`, sampling each interval at `samples` points
/// for the constraint check.
pub fn zoh_policy_cost<T: Real>(
    problem: &LtiOcProblem<T>,
    x0: &DVector<T>,
    inputs: &[DVector<T>],
    samples: usize,
) -> Result<(T, T)> {
    let steps = inputs.len();
    if steps == 0 {
        return Err(Error::InvalidProblem("empty input sequence".into()));
    }
    let (n, m) = (problem.n(), problem.m());
    let h = problem.horizon / lit(steps as f64);
    let mut aug = DMatrix::<T>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&problem.a);
    aug.view_mut((0, n), (n, m)).copy_from(&problem.b);
    let tol: T = lit(1e-12);
    let mut x = x0.clone();
    let mut cost = T::zero();
    let mut worst = T::min_value().unwrap_or(lit(-1e300));
    for u in inputs {
        let flow = |tau: T| -> Result<DVector<T>> {
            let e = linalg::expm_scaled(&aug, tau)?;
            Ok(e.view((0, 0), (n, n)) * &x + e.view((0, n), (n, m)) * u)
        };
        let integrand = |tau: T| {
            flow(tau)
                .map(|xt| problem.running_cost(&xt, u))
                .unwrap_or(T::zero())
        };
        cost += linalg::integrate(integrand, T::zero(), h, tol);
        for s in 0..=samples {
            let tau = h * lit(s as f64 / samples.max(1) as f64);
            let g = problem.constraint_values(&flow(tau)?, u);
            worst = worst.max(g.max());
        }
        x = flow(h)?;
    }
    cost += problem.terminal_cost(&x);
    Ok((cost, worst))
}
