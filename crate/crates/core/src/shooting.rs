//! Shooting for a fixed arc structure.
//!
//! Unknowns are the initial costate `λ₀` and the switching times. Residuals
//! stack the transversality condition `λ(T) − P·x(T)` and one junction
//! condition per event. Because the dynamics are affine once the times are
//! fixed, `λ₀` is re-solved exactly at every Newton iterate.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arc::{assemble_arc_system, augment, point_state, ArcDynamics, PointState};
use crate::error::{Error, EscapeSide, Result};
use crate::linalg;
use crate::problem::{ActiveSet, LtiOcProblem};
use crate::scalar::{lit, to_f64, Real};

/// Switch between consecutive arcs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    Entry(usize),
    Exit(usize),
}

impl Event {
    pub fn row(&self) -> usize {
        match *self {
            Event::Entry(i) | Event::Exit(i) => i,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Entry(i) => write!(f, "entry({i})"),
            Event::Exit(i) => write!(f, "exit({i})"),
        }
    }
}

/// Ordered sequence of active sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArcStructure {
    arcs: Vec<ActiveSet>,
    events: Vec<Event>,
}

impl ArcStructure {
    /// Builds a structure; consecutive sets must differ by exactly one row.
    pub fn new(arcs: Vec<ActiveSet>) -> Result<Self> {
        if arcs.is_empty() {
            return Err(Error::InvalidProblem(
                "structure needs at least one arc".into(),
            ));
        }
        let mut events = Vec::with_capacity(arcs.len() - 1);
        for w in arcs.windows(2) {
            let diff = w[0].symmetric_difference(&w[1]);
            if diff.len() != 1 {
                return Err(Error::InvalidProblem(format!(
                    "arcs {} and {} must differ by exactly one row",
                    w[0], w[1]
                )));
            }
            let row = diff[0];
            events.push(if w[1].contains(row) {
                Event::Entry(row)
            } else {
                Event::Exit(row)
            });
        }
        Ok(Self { arcs, events })
    }

    pub fn unconstrained() -> Self {
        Self {
            arcs: vec![ActiveSet::empty()],
            events: Vec::new(),
        }
    }

    pub fn single(active: ActiveSet) -> Self {
        Self {
            arcs: vec![active],
            events: Vec::new(),
        }
    }

    pub fn arcs(&self) -> &[ActiveSet] {
        &self.arcs
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    /// Human readable form using row names, e.g. `y_min → unconstrained`.
    pub fn label<T: Real>(&self, problem: &LtiOcProblem<T>) -> String {
        self.arcs
            .iter()
            .map(|a| a.label(problem))
            .collect::<Vec<_>>()
            .join(" → ")
    }
}

impl fmt::Display for ArcStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.arcs.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Which junction condition defines a switching time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JunctionForm {
    /// `g_i(t_s) = 0` under the inactive-side control law.
    #[default]
    Constraint,
    /// `μ_i(t_s) = 0` on the active side.
    Multiplier,
}

/// Starting point for Newton.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Guess<T: Real> {
    pub lambda0: Option<DVector<T>>,
    pub times: Option<Vec<T>>,
}

impl<T: Real> Guess<T> {
    pub fn times(times: Vec<T>) -> Self {
        Self {
            lambda0: None,
            times: Some(times),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub junction: JunctionForm,
    pub quadrature_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 50,
            junction: JunctionForm::Constraint,
            quadrature_tol: 1e-10,
        }
    }
}

/// Switching times closer than this are considered merged.
pub const COLLAPSE_GAP: f64 = 1e-9;

/// Converged solution for one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedTrajectory<T: Real> {
    pub structure: ArcStructure,
    pub t_switch: Vec<T>,
    pub x0: DVector<T>,
    pub lambda0: DVector<T>,
    pub arcs: Vec<ArcDynamics<T>>,
    pub cost: T,
    pub horizon: T,
    starts: Vec<DVector<T>>,
}

impl<T: Real> SolvedTrajectory<T> {
    /// `[0, t_1, …, t_Ns, T]`.
    pub fn bounds(&self) -> Vec<T> {
        let mut b = Vec::with_capacity(self.t_switch.len() + 2);
        b.push(T::zero());
        b.extend_from_slice(&self.t_switch);
        b.push(self.horizon);
        b
    }

    pub fn arc_interval(&self, k: usize) -> (T, T) {
        let b = self.bounds();
        (b[k], b[k + 1])
    }

    /// Index of the arc containing `t`; switching instants belong to the later arc.
    pub fn arc_index_at(&self, t: T) -> usize {
        self.t_switch.iter().take_while(|&&s| s <= t).count()
    }

    /// Evaluates arc `k` at `t` (extrapolating if `t` lies outside the arc).
    pub fn state_on_arc(&self, problem: &LtiOcProblem<T>, k: usize, t: T) -> Result<PointState<T>> {
        let (a, _) = self.arc_interval(k);
        let z = self.arcs[k].propagator(t - a)? * &self.starts[k];
        Ok(point_state(problem, &self.arcs[k], t, &z))
    }

    pub fn state_at(&self, problem: &LtiOcProblem<T>, t: T) -> Result<PointState<T>> {
        let k = self.arc_index_at(t).min(self.arcs.len() - 1);
        self.state_on_arc(problem, k, t)
    }

    /// States on both sides of switch `s`.
    pub fn junction_states(
        &self,
        problem: &LtiOcProblem<T>,
        s: usize,
    ) -> Result<(PointState<T>, PointState<T>)> {
        let t = self.t_switch[s];
        Ok((
            self.state_on_arc(problem, s, t)?,
            self.state_on_arc(problem, s + 1, t)?,
        ))
    }

    pub fn terminal_state(&self, problem: &LtiOcProblem<T>) -> Result<PointState<T>> {
        self.state_on_arc(problem, self.arcs.len() - 1, self.horizon)
    }

    /// Augmented state `(x, λ, 1)` at the start of each arc.
    pub fn arc_starts(&self) -> &[DVector<T>] {
        &self.starts
    }
}

fn check_times<T: Real>(times: &[T], horizon: T) -> Result<()> {
    let ok_range = times.iter().all(|&t| t > T::zero() && t < horizon);
    let ok_order = times.windows(2).all(|w| w[0] < w[1]);
    if ok_range && ok_order {
        Ok(())
    } else {
        Err(Error::Degenerate(format!(
            "switching times {:?} must be increasing inside the horizon",
            times.iter().map(|t| to_f64(*t)).collect::<Vec<_>>()
        )))
    }
}

fn build_arcs<T: Real>(
    problem: &LtiOcProblem<T>,
    structure: &ArcStructure,
) -> Result<Vec<ArcDynamics<T>>> {
    structure
        .arcs()
        .iter()
        .map(|a| assemble_arc_system(problem, a))
        .collect()
}

fn with_ends<T: Real>(times: &[T], horizon: T) -> Vec<T> {
    let mut b = Vec::with_capacity(times.len() + 2);
    b.push(T::zero());
    b.extend_from_slice(times);
    b.push(horizon);
    b
}

/// Per-arc propagators for the given switching times.
fn propagators<T: Real>(arcs: &[ArcDynamics<T>], bounds: &[T]) -> Result<Vec<DMatrix<T>>> {
    arcs.iter()
        .enumerate()
        .map(|(k, arc)| arc.propagator(bounds[k + 1] - bounds[k]))
        .collect()
}

/// `λ₀` satisfying transversality for fixed times, if the map is invertible.
fn eliminate_lambda0<T: Real>(
    problem: &LtiOcProblem<T>,
    x0: &DVector<T>,
    props: &[DMatrix<T>],
) -> Option<DVector<T>> {
    let n = problem.n();
    let mut phi = DMatrix::<T>::identity(2 * n + 1, 2 * n + 1);
    for p in props {
        phi = p * phi;
    }
    let mut sel = DMatrix::<T>::zeros(n, 2 * n + 1);
    sel.view_mut((0, 0), (n, n)).copy_from(&(-&problem.p));
    sel.view_mut((0, n), (n, n)).fill_with_identity();
    let map = sel * phi;
    let lin = map.view((0, n), (n, n)).into_owned();
    let z = augment(x0, &DVector::zeros(n));
    let c = &map * z;
    linalg::solve_vec(&lin, &(-c))
}

fn propagate_states<T: Real>(props: &[DMatrix<T>], z0: DVector<T>) -> Vec<DVector<T>> {
    let mut out = Vec::with_capacity(props.len() + 1);
    out.push(z0);
    for p in props {
        let next = p * out.last().unwrap();
        out.push(next);
    }
    out
}

fn junction_value<T: Real>(
    problem: &LtiOcProblem<T>,
    arcs: &[ArcDynamics<T>],
    event: Event,
    s: usize,
    z: &DVector<T>,
    form: JunctionForm,
) -> T {
    let row = event.row();
    let g_on = |arc: &ArcDynamics<T>| {
        let n = problem.n();
        let u = arc.control(z);
        problem.gx.row(row).dot(&z.rows(0, n).transpose()) + problem.gu.row(row).dot(&u.transpose())
            - problem.bound[row]
    };
    let mu_on = |arc: &ArcDynamics<T>| {
        let pos = arc
            .active
            .position(row)
            .expect("event row active on its active side");
        (arc.mu_map.row(pos) * z)[0]
    };
    match (form, event) {
        (JunctionForm::Constraint, Event::Entry(_)) => g_on(&arcs[s]),
        (JunctionForm::Constraint, Event::Exit(_)) => g_on(&arcs[s + 1]),
        (JunctionForm::Multiplier, Event::Entry(_)) => mu_on(&arcs[s + 1]),
        (JunctionForm::Multiplier, Event::Exit(_)) => mu_on(&arcs[s]),
    }
}

/// Residual without range checks; times may lie anywhere.
fn residual_raw<T: Real>(
    problem: &LtiOcProblem<T>,
    structure: &ArcStructure,
    arcs: &[ArcDynamics<T>],
    x0: &DVector<T>,
    lambda0: &DVector<T>,
    times: &[T],
    form: JunctionForm,
) -> Result<DVector<T>> {
    let n = problem.n();
    let bounds = with_ends(times, problem.horizon);
    let props = propagators(arcs, &bounds)?;
    let zs = propagate_states(&props, augment(x0, lambda0));
    let ns = times.len();
    let mut r = DVector::zeros(n + ns);
    let zt = zs.last().unwrap();
    let xt = zt.rows(0, n).into_owned();
    let lt = zt.rows(n, n).into_owned();
    r.rows_mut(0, n).copy_from(&(lt - &problem.p * xt));
    for (s, &ev) in structure.events().iter().enumerate() {
        r[n + s] = junction_value(problem, arcs, ev, s, &zs[s + 1], form);
    }
    if r.iter().all(|v| v.is_finite()) {
        Ok(r)
    } else {
        Err(Error::NonFinite)
    }
}

/// Residual vector for unknowns `(λ₀, t_1..t_Ns)`.
pub fn shoot_residuals<T: Real>(
    problem: &LtiOcProblem<T>,
    structure: &ArcStructure,
    unknowns: &DVector<T>,
    x0: &DVector<T>,
) -> Result<DVector<T>> {
    shoot_residuals_with(problem, structure, unknowns, x0, JunctionForm::Constraint)
}

pub fn shoot_residuals_with<T: Real>(
    problem: &LtiOcProblem<T>,
    structure: &ArcStructure,
    unknowns: &DVector<T>,
    x0: &DVector<T>,
    form: JunctionForm,
) -> Result<DVector<T>> {
    let n = problem.n();
    let ns = structure.num_events();
    if unknowns.len() != n + ns || x0.len() != n {
        return Err(Error::InvalidProblem(
            "unknown vector has the wrong length".into(),
        ));
    }
    let times: Vec<T> = unknowns.rows(n, ns).iter().copied().collect();
    check_times(&times, problem.horizon)?;
    let arcs = build_arcs(problem, structure)?;
    let lambda0 = unknowns.rows(0, n).into_owned();
    residual_raw(problem, structure, &arcs, x0, &lambda0, &times, form)
}

fn inf_norm<T: Real>(v: &DVector<T>) -> T {
    v.amax()
}

struct Solver<'a, T: Real> {
    problem: &'a LtiOcProblem<T>,
    structure: &'a ArcStructure,
    arcs: Vec<ArcDynamics<T>>,
    x0: &'a DVector<T>,
    form: JunctionForm,
}

impl<T: Real> Solver<'_, T> {
    fn n(&self) -> usize {
        self.problem.n()
    }

    fn split(&self, xi: &DVector<T>) -> (DVector<T>, Vec<T>) {
        let n = self.n();
        (
            xi.rows(0, n).into_owned(),
            xi.rows(n, xi.len() - n).iter().copied().collect(),
        )
    }

    fn residual(&self, xi: &DVector<T>) -> Result<DVector<T>> {
        let (l0, times) = self.split(xi);
        residual_raw(
            self.problem,
            self.structure,
            &self.arcs,
            self.x0,
            &l0,
            &times,
            self.form,
        )
    }

    /// Replaces `λ₀` by the exact transversality solution for the current times.
    fn eliminate(&self, xi: &mut DVector<T>) -> Result<()> {
        let n = self.n();
        let (_, times) = self.split(xi);
        let props = propagators(&self.arcs, &with_ends(&times, self.problem.horizon))?;
        if let Some(l0) = eliminate_lambda0(self.problem, self.x0, &props) {
            if l0.iter().all(|v| v.is_finite()) {
                xi.rows_mut(0, n).copy_from(&l0);
            }
        }
        Ok(())
    }

    fn jacobian(&self, xi: &DVector<T>) -> Result<DMatrix<T>> {
        let dim = xi.len();
        let base_step = lit::<T>(1e-6).max(T::default_epsilon().powf(lit(1.0 / 3.0)));
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let h = base_step * T::one().max(xi[j].abs());
            let mut plus = xi.clone();
            plus[j] += h;
            let mut minus = xi.clone();
            minus[j] -= h;
            let col = (self.residual(&plus)? - self.residual(&minus)?) / (h + h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    fn clamp_times(&self, xi: &mut DVector<T>) {
        let n = self.n();
        let horizon = self.problem.horizon;
        for k in n..xi.len() {
            xi[k] = xi[k].max(-horizon).min(horizon + horizon);
        }
    }

    /// Damped Newton on the full unknown vector.
    fn newton(&self, mut xi: DVector<T>, tol: T, max_iter: usize) -> (DVector<T>, Result<T>) {
        let mut last = lit::<T>(f64::INFINITY);
        for _ in 0..max_iter {
            if let Err(e) = self.eliminate(&mut xi) {
                return (xi, Err(e));
            }
            let r = match self.residual(&xi) {
                Ok(r) => r,
                Err(e) => return (xi, Err(e)),
            };
            let norm = inf_norm(&r);
            last = norm;
            if norm <= tol {
                return (xi, Ok(norm));
            }
            let jac = match self.jacobian(&xi) {
                Ok(j) => j,
                Err(e) => return (xi, Err(e)),
            };
            let Some(step) = linalg::solve_vec(&jac, &(-&r)) else {
                break;
            };
            let mut alpha = T::one();
            let mut accepted = false;
            for _ in 0..=20 {
                let mut trial = &xi + &step * alpha;
                self.clamp_times(&mut trial);
                if let Ok(rt) = self.residual(&trial) {
                    if inf_norm(&rt) < norm {
                        xi = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        (
            xi,
            Err(Error::NoConvergence {
                iterations: max_iter,
                residual: to_f64(last),
            }),
        )
    }

    /// Junction residual of a single-event structure with `λ₀` eliminated.
    fn reduced(&self, t: T) -> Result<(T, DVector<T>)> {
        let n = self.n();
        let mut xi = DVector::zeros(n + 1);
        xi[n] = t;
        self.eliminate(&mut xi)?;
        let r = self.residual(&xi)?;
        Ok((r[n], xi))
    }

    /// Sign-change scan over the horizon for one event.
    fn scan_single(&self, guess_t: T) -> Result<DVector<T>> {
        let horizon = self.problem.horizon;
        let k = 64;
        let grid = linalg::linspace(T::zero(), horizon, k);
        let mut vals = Vec::with_capacity(grid.len());
        for &t in &grid {
            vals.push(self.reduced(t)?.0);
        }
        let mut best: Option<(T, T)> = None;
        for i in 0..k {
            if vals[i] == T::zero() || (vals[i] > T::zero()) != (vals[i + 1] > T::zero()) {
                let mid = (grid[i] + grid[i + 1]) * lit(0.5);
                let d = (mid - guess_t).abs();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((grid[i], d));
                }
            }
        }
        let Some((lo_t, _)) = best else {
            let positive = vals.iter().filter(|v| **v > T::zero()).count() * 2 > vals.len();
            let event = self.structure.events()[0];
            let side = match (event, positive) {
                (Event::Exit(_), true) | (Event::Entry(_), false) => EscapeSide::End,
                _ => EscapeSide::Start,
            };
            return Err(Error::TimeEscaped { event: 0, side });
        };
        let idx = grid.iter().position(|&g| g == lo_t).unwrap();
        let (mut a, mut b) = (grid[idx], grid[idx + 1]);
        let mut fa = vals[idx];
        for _ in 0..200 {
            let m = (a + b) * lit(0.5);
            if m <= a || m >= b {
                break;
            }
            let (fm, _) = self.reduced(m)?;
            if fm == T::zero() {
                a = m;
                b = m;
                break;
            }
            if (fm > T::zero()) == (fa > T::zero()) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        Ok(self.reduced((a + b) * lit(0.5))?.1)
    }

    /// Classifies a converged iterate against the horizon.
    fn check_converged(&self, xi: &DVector<T>) -> Result<()> {
        let (_, times) = self.split(xi);
        let horizon = self.problem.horizon;
        let gap = lit::<T>(COLLAPSE_GAP);
        if let Some(&first) = times.first() {
            if first <= gap {
                return Err(Error::TimeEscaped {
                    event: 0,
                    side: EscapeSide::Start,
                });
            }
        }
        if let Some(&last) = times.last() {
            if last >= horizon - gap {
                return Err(Error::TimeEscaped {
                    event: times.len() - 1,
                    side: EscapeSide::End,
                });
            }
        }
        for (k, w) in times.windows(2).enumerate() {
            if w[1] - w[0] < gap {
                return Err(Error::TimesCollapsed {
                    first: k,
                    second: k + 1,
                });
            }
        }
        for (k, &t) in times.iter().enumerate() {
            if t <= T::zero() {
                return Err(Error::TimeEscaped {
                    event: k,
                    side: EscapeSide::Start,
                });
            }
            if t >= horizon {
                return Err(Error::TimeEscaped {
                    event: k,
                    side: EscapeSide::End,
                });
            }
        }
        Ok(())
    }
}

fn trajectory_cost<T: Real>(
    problem: &LtiOcProblem<T>,
    arcs: &[ArcDynamics<T>],
    bounds: &[T],
    starts: &[DVector<T>],
    tol: T,
) -> Result<T> {
    let n = problem.n();
    let mut total = T::zero();
    let mut failure = None;
    for (k, arc) in arcs.iter().enumerate() {
        let (a, b) = (bounds[k], bounds[k + 1]);
        if b <= a {
            continue;
        }
        let z0 = &starts[k];
        total += linalg::integrate(
            |t| match arc.propagator(t - a) {
                Ok(phi) => {
                    let z = phi * z0;
                    let x = z.rows(0, n).into_owned();
                    problem.running_cost(&x, &arc.control(&z))
                }
                Err(e) => {
                    failure = Some(e);
                    T::zero()
                }
            },
            a,
            b,
            tol,
        );
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let last = arcs.len() - 1;
    let zt = arcs[last].propagator(bounds[last + 1] - bounds[last])? * &starts[last];
    total += problem.terminal_cost(&zt.rows(0, n).into_owned());
    Ok(total)
}

/// Solves the boundary value problem for `structure` with default options.
pub fn solve_fixed_structure<T: Real>(
    problem: &LtiOcProblem<T>,
    x0: &DVector<T>,
    structure: &ArcStructure,
    guess: &Guess<T>,
) -> Result<SolvedTrajectory<T>> {
    solve_fixed_structure_with(problem, x0, structure, guess, &ShootingOptions::default())
}

pub fn solve_fixed_structure_with<T: Real>(
    problem: &LtiOcProblem<T>,
    x0: &DVector<T>,
    structure: &ArcStructure,
    guess: &Guess<T>,
    opts: &ShootingOptions,
) -> Result<SolvedTrajectory<T>> {
    let n = problem.n();
    if x0.len() != n {
        return Err(Error::InvalidProblem(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    let ns = structure.num_events();
    let horizon = problem.horizon;
    let times = match &guess.times {
        Some(t) if t.len() == ns => t.clone(),
        Some(_) => {
            return Err(Error::InvalidProblem(
                "guess has the wrong number of times".into(),
            ))
        }
        None => (1..=ns)
            .map(|k| horizon * lit::<T>(k as f64 / (ns + 1) as f64))
            .collect(),
    };
    let lambda0 = guess.lambda0.clone().unwrap_or_else(|| &problem.p * x0);
    let solver = Solver {
        problem,
        structure,
        arcs: build_arcs(problem, structure)?,
        x0,
        form: opts.junction,
    };
    let tol = lit::<T>(opts.tol).max(T::default_epsilon() * lit(1e4));

    let mut xi = DVector::zeros(n + ns);
    xi.rows_mut(0, n).copy_from(&lambda0);
    for (k, t) in times.iter().enumerate() {
        xi[n + k] = *t;
    }
    let (mut xi, mut status) = solver.newton(xi, tol, opts.max_iterations);
    let out_of_range = {
        let (_, t) = solver.split(&xi);
        t.iter().any(|&s| s <= T::zero() || s >= horizon)
    };
    if ns == 1 && (status.is_err() || out_of_range) {
        let start = solver.scan_single(times[0])?;
        let polished = solver.newton(start, tol, opts.max_iterations);
        xi = polished.0;
        status = polished.1;
    }
    status?;
    solver.check_converged(&xi)?;

    let (lambda0, t_switch) = solver.split(&xi);
    let bounds = with_ends(&t_switch, horizon);
    let props = propagators(&solver.arcs, &bounds)?;
    let mut starts = propagate_states(&props, augment(x0, &lambda0));
    starts.pop();
    let cost = trajectory_cost(
        problem,
        &solver.arcs,
        &bounds,
        &starts,
        lit(opts.quadrature_tol),
    )?;
    Ok(SolvedTrajectory {
        structure: structure.clone(),
        t_switch,
        x0: x0.clone(),
        lambda0,
        arcs: solver.arcs,
        cost,
        horizon,
        starts,
    })
}

/// Pointwise optimality checks for a solved trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T: Real> {
    /// Smallest multiplier over active stretches, if any row is ever active.
    pub mu_min: Option<T>,
    /// Largest constraint value over inactive stretches, if any.
    pub g_max: Option<T>,
    pub hamiltonian_jump: T,
    pub control_jump: T,
    pub row_mu_min: Vec<Option<T>>,
    pub row_g_max: Vec<Option<T>>,
    pub pass: bool,
}

impl<T: Real> ValidationReport<T> {
    /// Row with the largest inactive-side violation above `tol`.
    pub fn worst_violation(&self, tol: T) -> Option<usize> {
        worst(&self.row_g_max, |v| v > tol, |a, b| a > b)
    }

    /// Row with the most negative active multiplier below `-tol`.
    pub fn worst_multiplier(&self, tol: T) -> Option<usize> {
        worst(&self.row_mu_min, |v| v < -tol, |a, b| a < b)
    }
}

fn worst<T: Real>(
    vals: &[Option<T>],
    bad: impl Fn(T) -> bool,
    better: impl Fn(T, T) -> bool,
) -> Option<usize> {
    let mut out: Option<(usize, T)> = None;
    for (i, v) in vals.iter().enumerate() {
        if let Some(v) = *v {
            if bad(v) && out.is_none_or(|(_, w)| better(v, w)) {
                out = Some((i, v));
            }
        }
    }
    out.map(|(i, _)| i)
}

/// Tolerance used by [`validate_solution`].
pub const VALIDATION_TOL: f64 = 1e-7;

/// Samples used per arc by [`validate_solution`].
pub const VALIDATION_SAMPLES: usize = 200;

/// Sample times on `[a, b]`: Chebyshev points plus both endpoints.
pub fn arc_samples<T: Real>(a: T, b: T, k: usize) -> Vec<T> {
    if b <= a {
        return vec![a];
    }
    let mut ts = Vec::with_capacity(k + 2);
    ts.push(a);
    ts.extend(linalg::chebyshev_points(a, b, k));
    ts.push(b);
    ts
}

pub fn validate_solution<T: Real>(
    problem: &LtiOcProblem<T>,
    traj: &SolvedTrajectory<T>,
) -> ValidationReport<T> {
    let c = problem.rows();
    let mut row_mu_min: Vec<Option<T>> = vec![None; c];
    let mut row_g_max: Vec<Option<T>> = vec![None; c];
    let mut evaluation_failed = false;
    for (k, arc) in traj.arcs.iter().enumerate() {
        let (a, b) = traj.arc_interval(k);
        for t in arc_samples(a, b, VALIDATION_SAMPLES) {
            let Ok(s) = traj.state_on_arc(problem, k, t) else {
                evaluation_failed = true;
                continue;
            };
            for i in 0..c {
                if arc.active.contains(i) {
                    let v = s.mu[i];
                    row_mu_min[i] = Some(row_mu_min[i].map_or(v, |m: T| m.min(v)));
                } else {
                    let v = s.g[i];
                    row_g_max[i] = Some(row_g_max[i].map_or(v, |m: T| m.max(v)));
                }
            }
        }
    }
    let mut hamiltonian_jump = T::zero();
    let mut control_jump = T::zero();
    for s in 0..traj.t_switch.len() {
        match traj.junction_states(problem, s) {
            Ok((pre, post)) => {
                hamiltonian_jump = hamiltonian_jump.max((pre.hamiltonian - post.hamiltonian).abs());
                control_jump = control_jump.max((pre.u - post.u).amax());
            }
            Err(_) => evaluation_failed = true,
        }
    }
    let fold = |v: &[Option<T>], f: fn(T, T) -> T| v.iter().flatten().copied().reduce(f);
    let mu_min = fold(&row_mu_min, |a, b| a.min(b));
    let g_max = fold(&row_g_max, |a, b| a.max(b));
    let tol = lit::<T>(VALIDATION_TOL);
    let pass =
        !evaluation_failed && mu_min.is_none_or(|m| m >= -tol) && g_max.is_none_or(|g| g <= tol);
    ValidationReport {
        mu_min,
        g_max,
        hamiltonian_jump,
        control_jump,
        row_mu_min,
        row_g_max,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{integrator_example, two_state_example};
    use approx::assert_abs_diff_eq;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn lower_then_free() -> ArcStructure {
        ArcStructure::new(vec![ActiveSet::new([1]), ActiveSet::empty()]).unwrap()
    }

    #[test]
    fn structure_events_follow_from_arcs() {
        let s = ArcStructure::new(vec![
            ActiveSet::empty(),
            ActiveSet::new([0]),
            ActiveSet::empty(),
        ])
        .unwrap();
        assert_eq!(s.events(), &[Event::Entry(0), Event::Exit(0)]);
        assert_eq!(s.to_string(), "[{}, {0}, {}]");
        assert!(ArcStructure::new(vec![ActiveSet::empty(), ActiveSet::new([0, 1])]).is_err());
        assert!(ArcStructure::new(vec![]).is_err());
    }

    #[test]
    fn trivial_zero_residual() {
        let p = integrator_example::<f64>();
        let r = shoot_residuals(&p, &ArcStructure::unconstrained(), &v(0.0), &v(0.0)).unwrap();
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn residual_rejects_bad_times() {
        let p = integrator_example::<f64>();
        let u = DVector::from_vec(vec![0.0, 2.5]);
        assert!(matches!(
            shoot_residuals(&p, &lower_then_free(), &u, &v(-0.8)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn unconstrained_integrator() {
        let p = integrator_example::<f64>();
        let traj = solve_fixed_structure(
            &p,
            &v(0.3),
            &ArcStructure::unconstrained(),
            &Guess::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(traj.lambda0[0], 0.3, epsilon = 1e-12);
        for t in [0.0, 0.5, 1.7, 2.0] {
            let s = traj.state_at(&p, t).unwrap();
            assert_abs_diff_eq!(s.u[0], 0.3 * (-t).exp(), epsilon = 1e-12);
        }
        // J = ½x₀²
        assert_abs_diff_eq!(traj.cost, 0.045, epsilon = 1e-10);
    }

    #[test]
    fn lower_arc_switch_time() {
        let p = integrator_example::<f64>();
        let traj =
            solve_fixed_structure(&p, &v(-0.8), &lower_then_free(), &Guess::default()).unwrap();
        assert_abs_diff_eq!(traj.t_switch[0], 2.5f64.ln(), epsilon = 1e-10);
        let (pre, post) = traj.junction_states(&p, 0).unwrap();
        assert_abs_diff_eq!(pre.x[0], -0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(pre.hamiltonian, post.hamiltonian, epsilon = 1e-8);
        assert_abs_diff_eq!(pre.u[0], post.u[0], epsilon = 1e-8);
        let report = validate_solution(&p, &traj);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn junction_residual_at_optimum_and_perturbed() {
        let p = integrator_example::<f64>();
        let s = lower_then_free();
        let x0 = -0.8;
        let ts = 2.5f64.ln();
        let traj = solve_fixed_structure(&p, &v(x0), &s, &Guess::default()).unwrap();
        let r = shoot_residuals(
            &p,
            &s,
            &DVector::from_vec(vec![traj.lambda0[0], ts]),
            &v(x0),
        )
        .unwrap();
        assert!(r.amax() < 1e-9);

        // λ₀ re-solved for the perturbed time so the terminal arc keeps λ = x.
        let solver = Solver {
            problem: &p,
            structure: &s,
            arcs: build_arcs(&p, &s).unwrap(),
            x0: &v(x0),
            form: JunctionForm::Constraint,
        };
        let (g, xi) = solver.reduced(ts + 0.1).unwrap();
        let expected = -2.0 * ((x0 + 1.0) * (ts + 0.1).exp() - 1.0) - 1.0;
        assert_abs_diff_eq!(g, expected, epsilon = 1e-12);
        assert!(g < 0.0);
        let full = shoot_residuals(&p, &s, &xi, &v(x0)).unwrap();
        assert!(full[0].abs() < 1e-12);
    }

    #[test]
    fn exit_forms_agree() {
        let p = integrator_example::<f64>();
        let s = lower_then_free();
        for x0 in [-0.6, -0.7, -0.8, -0.9] {
            let a = solve_fixed_structure(&p, &v(x0), &s, &Guess::default()).unwrap();
            let opts = ShootingOptions {
                junction: JunctionForm::Multiplier,
                ..Default::default()
            };
            let b = solve_fixed_structure_with(&p, &v(x0), &s, &Guess::default(), &opts).unwrap();
            assert_abs_diff_eq!(a.t_switch[0], b.t_switch[0], epsilon = 1e-8);
            assert_abs_diff_eq!(
                a.t_switch[0],
                (1.0 / (2.0 * (x0 + 1.0))).ln(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn escaping_switch_is_reported() {
        let p = integrator_example::<f64>();
        // Above the region the lower arc would have to end before t = 0.
        match solve_fixed_structure(&p, &v(0.2), &lower_then_free(), &Guess::default()) {
            Err(Error::TimeEscaped { side, .. }) => assert_eq!(side, EscapeSide::Start),
            other => panic!("unexpected {other:?}"),
        }
        // Below it the lower arc lasts the whole horizon.
        match solve_fixed_structure(&p, &v(-1.1), &lower_then_free(), &Guess::default()) {
            Err(Error::TimeEscaped { side, .. }) => assert_eq!(side, EscapeSide::End),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_detects_violation() {
        let p = integrator_example::<f64>();
        let good = solve_fixed_structure(
            &p,
            &v(0.3),
            &ArcStructure::unconstrained(),
            &Guess::default(),
        )
        .unwrap();
        let r = validate_solution(&p, &good);
        assert!(r.pass);
        assert_abs_diff_eq!(r.g_max.unwrap(), 2.0 * 0.3 - 1.0, epsilon = 1e-12);
        let bad = solve_fixed_structure(
            &p,
            &v(0.6),
            &ArcStructure::unconstrained(),
            &Guess::default(),
        )
        .unwrap();
        let r = validate_solution(&p, &bad);
        assert!(!r.pass);
        assert_abs_diff_eq!(r.g_max.unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(r.worst_violation(1e-7), Some(0));
    }

    #[test]
    fn two_state_switch() {
        let p = two_state_example::<f64>();
        let s = ArcStructure::new(vec![ActiveSet::new([1]), ActiveSet::empty()]).unwrap();
        let x0 = DVector::from_vec(vec![-0.95, -1.65]);
        let traj = solve_fixed_structure(&p, &x0, &s, &Guess::default()).unwrap();
        assert_abs_diff_eq!(traj.t_switch[0], 0.1395895, epsilon = 1e-6);
        assert!(validate_solution(&p, &traj).pass);
    }
}
