//! Arc-wise Hamiltonian dynamics for a fixed active constraint set.
//!
//! On an arc with active rows `A`, stationarity of the Hamiltonian and the
//! active constraints give the block system
//!
//! ```text
//! [ R     Gu_Aᵀ ] [ u   ]   [ −Bᵀλ           ]
//! [ Gu_A  0     ] [ μ_A ] = [ b_A − Gx_A·x   ]
//! ```
//!
//! which makes `u` and `μ_A` affine in `(x, λ)`. Substituting into
//! `ẋ = Ax + Bu` and `λ̇ = −Qx − Aᵀλ − Gx_Aᵀμ_A` yields an affine ODE that is
//! stored homogeneously on `z = (x, λ, 1)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{ActiveSet, LtiOcProblem};
use crate::scalar::{lit, Real};

/// Condition number above which an active set is rejected.
pub const KKT_CONDITION_LIMIT: f64 = 1e12;

/// Linear generator and recovery maps for one arc.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcDynamics<T: Real> {
    pub active: ActiveSet,
    /// `(2n+1)×(2n+1)` generator on `z = (x, λ, 1)`; last row is zero.
    pub generator: DMatrix<T>,
    /// `m×(2n+1)` map `z ↦ u`.
    pub u_map: DMatrix<T>,
    /// `|A|×(2n+1)` map `z ↦ μ_A`, rows ordered like `active`.
    pub mu_map: DMatrix<T>,
    n: usize,
}

impl<T: Real> ArcDynamics<T> {
    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Control on this arc at augmented point `z`.
    pub fn control(&self, z: &DVector<T>) -> DVector<T> {
        &self.u_map * z
    }

    /// Full multiplier vector (zeros on inactive rows).
    pub fn multipliers(&self, z: &DVector<T>, rows: usize) -> DVector<T> {
        let mut mu = DVector::zeros(rows);
        if !self.active.is_empty() {
            let active = &self.mu_map * z;
            for (k, &row) in self.active.rows().iter().enumerate() {
                mu[row] = active[k];
            }
        }
        mu
    }

    /// `exp(M·dt)`.
    pub fn propagator(&self, dt: T) -> Result<DMatrix<T>> {
        linalg::expm_scaled(&self.generator, dt)
    }

    /// The `2n×2n` linear part acting on `(x, λ)`.
    pub fn hamiltonian_matrix(&self) -> DMatrix<T> {
        self.generator
            .view((0, 0), (2 * self.n, 2 * self.n))
            .into_owned()
    }
}

/// Everything known about the solution at one time instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointState<T: Real> {
    pub t: T,
    pub x: DVector<T>,
    pub lambda: DVector<T>,
    pub u: DVector<T>,
    pub mu: DVector<T>,
    pub g: DVector<T>,
    pub hamiltonian: T,
}

/// Appends the constant coordinate to `(x, λ)`.
pub fn augment<T: Real>(x: &DVector<T>, lambda: &DVector<T>) -> DVector<T> {
    let n = x.len();
    let mut z = DVector::zeros(2 * n + 1);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, n).copy_from(lambda);
    z[2 * n] = T::one();
    z
}

/// Builds the arc generator for `active`.
pub fn assemble_arc_system<T: Real>(
    problem: &LtiOcProblem<T>,
    active: &ActiveSet,
) -> Result<ArcDynamics<T>> {
    let (n, m, c) = (problem.n(), problem.m(), problem.rows());
    if let Some(&bad) = active.rows().iter().find(|&&r| r >= c) {
        return Err(Error::InvalidProblem(format!(
            "active row {bad} out of range"
        )));
    }
    let rows = active.rows();
    let a = rows.len();
    let dim = 2 * n + 1;

    let mut kkt = DMatrix::<T>::zeros(m + a, m + a);
    kkt.view_mut((0, 0), (m, m)).copy_from(&problem.r);
    for (k, &row) in rows.iter().enumerate() {
        for j in 0..m {
            kkt[(m + k, j)] = problem.gu[(row, j)];
            kkt[(j, m + k)] = problem.gu[(row, j)];
        }
    }
    let condition = linalg::condition_number(&kkt);
    if !(condition < lit::<T>(KKT_CONDITION_LIMIT)) {
        return Err(Error::SingularKkt {
            rows: rows.to_vec(),
            condition: crate::scalar::to_f64(condition),
        });
    }

    // Right-hand side as a map of z = (x, λ, 1).
    let mut rhs = DMatrix::<T>::zeros(m + a, dim);
    rhs.view_mut((0, n), (m, n))
        .copy_from(&(-problem.b.transpose()));
    for (k, &row) in rows.iter().enumerate() {
        for j in 0..n {
            rhs[(m + k, j)] = -problem.gx[(row, j)];
        }
        rhs[(m + k, 2 * n)] = problem.bound[row];
    }
    let sol = linalg::solve(&kkt, &rhs).ok_or_else(|| Error::SingularKkt {
        rows: rows.to_vec(),
        condition: f64::INFINITY,
    })?;
    let u_map = sol.rows(0, m).into_owned();
    let mu_map = sol.rows(m, a).into_owned();

    let mut generator = DMatrix::<T>::zeros(dim, dim);
    // ẋ = A x + B u
    generator.view_mut((0, 0), (n, n)).copy_from(&problem.a);
    let bu = &problem.b * &u_map;
    let mut top = generator.rows_mut(0, n);
    top += bu;
    // λ̇ = −Q x − Aᵀ λ − Gx_Aᵀ μ_A
    generator.view_mut((n, 0), (n, n)).copy_from(&(-&problem.q));
    generator
        .view_mut((n, n), (n, n))
        .copy_from(&(-problem.a.transpose()));
    if a > 0 {
        let mut gx_a = DMatrix::<T>::zeros(a, n);
        for (k, &row) in rows.iter().enumerate() {
            gx_a.set_row(k, &problem.gx.row(row));
        }
        let coupling = gx_a.transpose() * &mu_map;
        let mut mid = generator.rows_mut(n, n);
        mid -= coupling;
    }

    Ok(ArcDynamics {
        active: active.clone(),
        generator,
        u_map,
        mu_map,
        n,
    })
}

/// Evaluates all pointwise quantities at augmented state `z`.
pub fn point_state<T: Real>(
    problem: &LtiOcProblem<T>,
    arc: &ArcDynamics<T>,
    t: T,
    z: &DVector<T>,
) -> PointState<T> {
    let n = problem.n();
    let x = z.rows(0, n).into_owned();
    let lambda = z.rows(n, n).into_owned();
    let u = arc.control(z);
    let mu = arc.multipliers(z, problem.rows());
    let g = problem.constraint_values(&x, &u);
    let f = &problem.a * &x + &problem.b * &u;
    let hamiltonian = problem.running_cost(&x, &u) + lambda.dot(&f) + mu.dot(&g);
    PointState {
        t,
        x,
        lambda,
        u,
        mu,
        g,
        hamiltonian,
    }
}

/// Evaluates the arc trajectory started from `(x, λ)` at `t_start`, at `t ≥ t_start`.
pub fn evaluate_arc<T: Real>(
    problem: &LtiOcProblem<T>,
    arc: &ArcDynamics<T>,
    t_start: T,
    x_start: &DVector<T>,
    lambda_start: &DVector<T>,
    t: T,
) -> Result<PointState<T>> {
    if t < t_start {
        return Err(Error::Degenerate(format!(
            "evaluation time precedes arc start ({} < {})",
            crate::scalar::to_f64(t),
            crate::scalar::to_f64(t_start)
        )));
    }
    let z0 = augment(x_start, lambda_start);
    let z = arc.propagator(t - t_start)? * z0;
    Ok(point_state(problem, arc, t, &z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{integrator_example, two_state_example};
    use approx::assert_abs_diff_eq;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn integrator_unconstrained_law() {
        let p = integrator_example::<f64>();
        let arc = assemble_arc_system(&p, &ActiveSet::empty()).unwrap();
        // u = λ, ẋ = −λ, λ̇ = −x
        let z = augment(&v(0.7), &v(-0.2));
        assert_abs_diff_eq!(arc.control(&z)[0], -0.2, epsilon = 1e-15);
        let dz = &arc.generator * &z;
        assert_abs_diff_eq!(dz[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(dz[1], -0.7, epsilon = 1e-15);
        assert_eq!(dz[2], 0.0);
        assert_eq!(arc.mu_map.nrows(), 0);
    }

    #[test]
    fn integrator_lower_output_arc() {
        let p = integrator_example::<f64>();
        let arc = assemble_arc_system(&p, &ActiveSet::new([1])).unwrap();
        let z = augment(&v(-0.8), &v(0.1));
        // u = −1 − x, ẋ = 1 + x
        assert_abs_diff_eq!(arc.control(&z)[0], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!((&arc.generator * &z)[0], 0.2, epsilon = 1e-15);
        // μ = u − λ
        assert_abs_diff_eq!(arc.multipliers(&z, 3)[1], -0.3, epsilon = 1e-15);
    }

    #[test]
    fn conflicting_rows_are_singular() {
        let p = integrator_example::<f64>();
        let err = assemble_arc_system(&p, &ActiveSet::new([1, 2])).unwrap_err();
        assert!(matches!(err, Error::SingularKkt { .. }));
    }

    #[test]
    fn two_state_generators_match_closed_forms() {
        let p = two_state_example::<f64>();
        let inactive = assemble_arc_system(&p, &ActiveSet::empty()).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0., -1., -1., 0., -1., 0., 0., 0., -1., 0., 0., 1., 0., -1., 1., 0.,
            ],
        );
        assert_abs_diff_eq!(inactive.hamiltonian_matrix(), expected, epsilon = 1e-15);
        let active = assemble_arc_system(&p, &ActiveSet::new([0])).unwrap();
        // y1 = 1.2 pins u = 1.2 + x1 − x2.
        let z = augment(
            &DVector::from_vec(vec![0.3, -0.4]),
            &DVector::from_vec(vec![0.5, 0.1]),
        );
        assert_abs_diff_eq!(active.control(&z)[0], 1.9, epsilon = 1e-14);
        assert_eq!(active.generator.row(4).amax(), 0.0);
    }

    #[test]
    fn evaluate_rejects_backwards_time() {
        let p = integrator_example::<f64>();
        let arc = assemble_arc_system(&p, &ActiveSet::empty()).unwrap();
        assert!(evaluate_arc(&p, &arc, 1.0, &v(0.0), &v(0.0), 0.5).is_err());
        let s = evaluate_arc(&p, &arc, 0.0, &v(0.3), &v(0.3), 0.0).unwrap();
        assert_eq!(s.x[0], 0.3);
        assert_eq!(s.lambda[0], 0.3);
    }
}
