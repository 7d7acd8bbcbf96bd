//! Problem data: LTI dynamics, quadratic cost, mixed path constraints.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Linear time-invariant optimal control problem parameterised by its
/// initial state.
///
/// ```text
/// min  ½ x(T)ᵀP x(T) + ½ ∫₀ᵀ (xᵀQx + uᵀRu) dt
/// s.t. ẋ = Ax + Bu,   Gx·x + Gu·u − b ≤ 0,   x(0) = θ ∈ Θ
/// ```
///
/// Two-sided bounds are stored as two rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiOcProblem<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub p: DMatrix<T>,
    pub gx: DMatrix<T>,
    pub gu: DMatrix<T>,
    pub bound: DVector<T>,
    pub horizon: T,
    pub theta_box: Vec<(T, T)>,
    /// Human-readable constraint row names, used in labels and reports.
    pub row_names: Vec<String>,
}

impl<T: Real> LtiOcProblem<T> {
    /// Builds a problem and checks every structural invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
        p: DMatrix<T>,
        gx: DMatrix<T>,
        gu: DMatrix<T>,
        bound: DVector<T>,
        horizon: T,
        theta_box: Vec<(T, T)>,
    ) -> Result<Self> {
        let rows = bound.len();
        let problem = Self {
            a,
            b,
            q,
            r,
            p,
            gx,
            gu,
            bound,
            horizon,
            theta_box,
            row_names: (0..rows).map(|i| format!("g{i}")).collect(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_row_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.rows() {
            return Err(Error::InvalidProblem(format!(
                "{} row names for {} constraint rows",
                names.len(),
                self.rows()
            )));
        }
        self.row_names = names;
        Ok(self)
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Number of constraint rows.
    pub fn rows(&self) -> usize {
        self.bound.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m, c) = (self.n(), self.m(), self.rows());
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        if n == 0 || m == 0 {
            return bad("empty state or input dimension".into());
        }
        let shapes = [
            ("A", self.a.shape(), (n, n)),
            ("B", self.b.shape(), (n, m)),
            ("Q", self.q.shape(), (n, n)),
            ("R", self.r.shape(), (m, m)),
            ("P", self.p.shape(), (n, n)),
            ("Gx", self.gx.shape(), (c, n)),
            ("Gu", self.gu.shape(), (c, m)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return bad(format!("{name} has shape {got:?}, expected {want:?}"));
            }
        }
        if self.theta_box.len() != n {
            return bad(format!(
                "theta_box has {} pairs, expected {n}",
                self.theta_box.len()
            ));
        }
        let all_finite = [
            &self.a, &self.b, &self.q, &self.r, &self.p, &self.gx, &self.gu,
        ]
        .iter()
        .all(|mat| mat.iter().all(|v| v.is_finite()))
            && self.bound.iter().all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite problem data".into());
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return bad("horizon must be positive".into());
        }
        for (i, (lo, hi)) in self.theta_box.iter().enumerate() {
            if !(lo < hi) {
                return bad(format!("theta_box[{i}] is empty"));
            }
        }
        let tol = lit::<T>(1e-10);
        for (name, mat, definite) in [
            ("Q", &self.q, false),
            ("R", &self.r, true),
            ("P", &self.p, false),
        ] {
            let scale = mat.amax().max(T::one());
            if (mat - mat.transpose()).amax() > tol * scale {
                return bad(format!("{name} is not symmetric"));
            }
            let eig = mat.clone().symmetric_eigen().eigenvalues;
            let min = eig.iter().fold(T::max_value().unwrap(), |a, b| a.min(*b));
            if definite && !(min > tol * scale) {
                return bad(format!("{name} must be positive definite"));
            }
            if !definite && min < -tol * scale {
                return bad(format!("{name} must be positive semidefinite"));
            }
        }
        for i in 0..c {
            if self.gx.row(i).amax() == T::zero() && self.gu.row(i).amax() == T::zero() {
                return bad(format!("constraint row {i} is zero"));
            }
        }
        Ok(())
    }

    /// Constraint values `Gx·x + Gu·u − b`.
    pub fn constraint_values(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.gx * x + &self.gu * u - &self.bound
    }

    /// Running cost `½(xᵀQx + uᵀRu)`.
    pub fn running_cost(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        let half = lit::<T>(0.5);
        half * (x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
    }

    /// Terminal cost `½ xᵀPx`.
    pub fn terminal_cost(&self, x: &DVector<T>) -> T {
        lit::<T>(0.5) * x.dot(&(&self.p * x))
    }

    /// Whether `theta` lies in the parameter box.
    pub fn in_box(&self, theta: &[T]) -> bool {
        theta.len() == self.n()
            && theta
                .iter()
                .zip(&self.theta_box)
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Diameter of the parameter box.
    pub fn box_diameter(&self) -> T {
        self.theta_box
            .iter()
            .fold(T::zero(), |acc, (lo, hi)| acc + (*hi - *lo) * (*hi - *lo))
            .sqrt()
    }

    /// Copy with a different parameter box.
    pub fn with_box(&self, theta_box: Vec<(T, T)>) -> Result<Self> {
        let mut out = self.clone();
        out.theta_box = theta_box;
        out.validate()?;
        Ok(out)
    }

    /// Display name of a constraint row.
    pub fn row_name(&self, row: usize) -> &str {
        self.row_names.get(row).map(String::as_str).unwrap_or("?")
    }
}

/// Sorted set of constraint rows active on one arc.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(rows: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = rows.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn rows(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.0.binary_search(&row).is_ok()
    }

    pub fn with(&self, row: usize) -> Self {
        Self::new(self.0.iter().copied().chain(std::iter::once(row)))
    }

    pub fn without(&self, row: usize) -> Self {
        Self(self.0.iter().copied().filter(|&r| r != row).collect())
    }

    /// Position of `row` inside the set.
    pub fn position(&self, row: usize) -> Option<usize> {
        self.0.binary_search(&row).ok()
    }

    /// Rows in exactly one of the two sets.
    pub fn symmetric_difference(&self, other: &Self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .0
            .iter()
            .filter(|r| !other.contains(**r))
            .chain(other.0.iter().filter(|r| !self.contains(**r)))
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    /// Label using the problem's row names, `unconstrained` when empty.
    pub fn label<T: Real>(&self, problem: &LtiOcProblem<T>) -> String {
        if self.is_empty() {
            "unconstrained".to_string()
        } else {
            let names: Vec<&str> = self.0.iter().map(|&r| problem.row_name(r)).collect();
            format!("{} active", names.join("+"))
        }
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "{{}}");
        }
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Builds a problem from row-major `f64` slices.
#[allow(clippy::too_many_arguments)]
fn from_rows<T: Real>(
    n: usize,
    m: usize,
    a: &[f64],
    b: &[f64],
    q: &[f64],
    r: &[f64],
    p: &[f64],
    gx: &[f64],
    gu: &[f64],
    bound: &[f64],
    horizon: f64,
    theta_box: &[(f64, f64)],
    names: &[&str],
) -> LtiOcProblem<T> {
    let c = bound.len();
    let mat = |rows: usize, cols: usize, data: &[f64]| {
        DMatrix::from_row_iterator(rows, cols, data.iter().map(|v| lit::<T>(*v)))
    };
    LtiOcProblem::new(
        mat(n, n, a),
        mat(n, m, b),
        mat(n, n, q),
        mat(m, m, r),
        mat(n, n, p),
        mat(c, n, gx),
        mat(c, m, gu),
        DVector::from_iterator(c, bound.iter().map(|v| lit::<T>(*v))),
        lit(horizon),
        theta_box.iter().map(|(l, h)| (lit(*l), lit(*h))).collect(),
    )
    .and_then(|p| p.with_row_names(names.iter().map(|s| s.to_string()).collect()))
    .expect("built-in problem is valid")
}

/// One-state integrator `ẋ = −u` with output `y = x + u`, `−1 ≤ y ≤ 1`,
/// `u ≤ 2`, `T = 2`, `x₀ ∈ [−2, 2]`.
///
/// Rows: 0 `y_max` (`x + u − 1 ≤ 0`), 1 `y_min` (`−x − u − 1 ≤ 0`),
/// 2 `u_max` (`u − 2 ≤ 0`).
pub fn integrator_example<T: Real>() -> LtiOcProblem<T> {
    from_rows(
        1,
        1,
        &[0.0],
        &[-1.0],
        &[1.0],
        &[1.0],
        &[1.0],
        &[1.0, -1.0, 0.0],
        &[1.0, -1.0, 1.0],
        &[1.0, 1.0, 2.0],
        2.0,
        &[(-2.0, 2.0)],
        &["y_max", "y_min", "u_max"],
    )
}

/// Two-state system `ẋ = [[0,−1],[−1,0]]x + [1,0]ᵀu` with outputs
/// `y = [[−1,1],[1,−1]]x + [1,−1]ᵀu ≤ (1.2, 2)`, `T = 2`, `x₀ ∈ [−2, 2]²`.
///
/// Rows: 0 `y1` and 1 `y2`.
pub fn two_state_example<T: Real>() -> LtiOcProblem<T> {
    from_rows(
        2,
        1,
        &[0.0, -1.0, -1.0, 0.0],
        &[1.0, 0.0],
        &[1.0, 0.0, 0.0, 1.0],
        &[1.0],
        &[1.0, 0.0, 0.0, 1.0],
        &[-1.0, 1.0, 1.0, -1.0],
        &[1.0, -1.0],
        &[1.2, 2.0],
        2.0,
        &[(-2.0, 2.0), (-2.0, 2.0)],
        &["y1", "y2"],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_problems_validate() {
        let p1 = integrator_example::<f64>();
        assert_eq!((p1.n(), p1.m(), p1.rows()), (1, 1, 3));
        let p2 = two_state_example::<f64>();
        assert_eq!((p2.n(), p2.m(), p2.rows()), (2, 1, 2));
        let _f32 = two_state_example::<f32>();
    }

    #[test]
    fn rejects_indefinite_input_weight() {
        let mut p = integrator_example::<f64>();
        p.r[(0, 0)] = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn rejects_zero_row_and_empty_box() {
        let mut p = integrator_example::<f64>();
        p.gx[(2, 0)] = 0.0;
        p.gu[(2, 0)] = 0.0;
        assert!(p.validate().is_err());
        let p = integrator_example::<f64>();
        assert!(p.with_box(vec![(1.0, 1.0)]).is_err());
    }

    #[test]
    fn active_set_ops() {
        let s = ActiveSet::new([2, 0, 2]);
        assert_eq!(s.rows(), &[0, 2]);
        assert_eq!(s.with(1).rows(), &[0, 1, 2]);
        assert_eq!(s.without(0).rows(), &[2]);
        assert_eq!(s.symmetric_difference(&ActiveSet::new([2, 3])), vec![0, 3]);
        assert_eq!(s.to_string(), "{0,2}");
        let p = integrator_example::<f64>();
        assert_eq!(ActiveSet::new([1]).label(&p), "y_min active");
        assert_eq!(ActiveSet::empty().label(&p), "unconstrained");
    }

    #[test]
    fn constraint_values_match_rows() {
        let p = integrator_example::<f64>();
        let g = p.constraint_values(
            &DVector::from_element(1, 0.3),
            &DVector::from_element(1, 0.3),
        );
        assert!((g[0] - (-0.4)).abs() < 1e-15);
        assert!((g[1] - (-1.6)).abs() < 1e-15);
        assert!((g[2] - (-1.7)).abs() < 1e-15);
    }
}
