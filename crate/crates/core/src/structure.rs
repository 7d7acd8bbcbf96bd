//! Arc structure discovery by iterative activation and deactivation.

use std::collections::HashSet;

use nalgebra::DVector;

use crate::arc::assemble_arc_system;
use crate::error::{Error, EscapeSide, Result};
use crate::linalg;
use crate::problem::{ActiveSet, LtiOcProblem};
use crate::scalar::{lit, Real};
use crate::shooting::{
    solve_fixed_structure_with, validate_solution, ArcStructure, Guess, ShootingOptions,
    SolvedTrajectory, ValidationReport, VALIDATION_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub max_rounds: usize,
    pub max_events: usize,
    /// Uniform samples over the horizon used to locate violation windows.
    pub scan_points: usize,
    pub shooting: ShootingOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_rounds: 20,
            max_events: 8,
            scan_points: 400,
            shooting: ShootingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Segment<T> {
    t0: T,
    t1: T,
    set: ActiveSet,
}

/// Piecewise-constant active set over the horizon, used as an initial guess.
#[derive(Debug, Clone, PartialEq)]
struct Timeline<T: Real> {
    segs: Vec<Segment<T>>,
}

impl<T: Real> Timeline<T> {
    fn unconstrained(horizon: T) -> Self {
        Self {
            segs: vec![Segment {
                t0: T::zero(),
                t1: horizon,
                set: ActiveSet::empty(),
            }],
        }
    }

    fn from_structure(structure: &ArcStructure, times: &[T], horizon: T) -> Self {
        let mut bounds = vec![T::zero()];
        bounds.extend_from_slice(times);
        bounds.push(horizon);
        let segs = structure
            .arcs()
            .iter()
            .enumerate()
            .map(|(k, set)| Segment {
                t0: bounds[k],
                t1: bounds[k + 1],
                set: set.clone(),
            })
            .collect();
        Self { segs }
    }

    fn merge(&mut self) {
        let mut out: Vec<Segment<T>> = Vec::with_capacity(self.segs.len());
        for s in self.segs.drain(..) {
            match out.last_mut() {
                Some(last) if last.set == s.set => last.t1 = s.t1,
                _ => out.push(s),
            }
        }
        self.segs = out;
    }

    /// Removes segment `k`, handing its span to the previous or next neighbour.
    fn drop_segment(&mut self, k: usize, give_to_previous: bool) {
        if self.segs.len() <= 1 {
            return;
        }
        let seg = self.segs.remove(k);
        if give_to_previous && k > 0 {
            self.segs[k - 1].t1 = seg.t1;
        } else if k < self.segs.len() {
            self.segs[k].t0 = seg.t0;
        } else {
            self.segs[k - 1].t1 = seg.t1;
        }
        self.merge();
    }

    fn split_at(&mut self, t: T) {
        if let Some(k) = self.segs.iter().position(|s| s.t0 < t && t < s.t1) {
            let right = Segment {
                t0: t,
                t1: self.segs[k].t1,
                set: self.segs[k].set.clone(),
            };
            self.segs[k].t1 = t;
            self.segs.insert(k + 1, right);
        }
    }

    fn modify(&mut self, a: T, b: T, f: impl Fn(&ActiveSet) -> ActiveSet) {
        self.split_at(a);
        self.split_at(b);
        for s in &mut self.segs {
            if s.t0 >= a && s.t1 <= b {
                s.set = f(&s.set);
            }
        }
        self.merge();
    }

    fn structure(&self) -> Result<(ArcStructure, Vec<T>)> {
        let s = ArcStructure::new(self.segs.iter().map(|s| s.set.clone()).collect())?;
        let times = self.segs.iter().skip(1).map(|s| s.t0).collect();
        Ok((s, times))
    }
}

/// A maximal stretch of time on which an inactive row is violated.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationWindow<T> {
    pub row: usize,
    pub start: T,
    pub end: T,
    /// Integral of the positive part of `g_row` over the window.
    pub weight: T,
    pub peak: T,
}

/// Violation windows of inactive rows on a uniform time grid, heaviest first.
pub fn violation_windows<T: Real>(
    problem: &LtiOcProblem<T>,
    traj: &SolvedTrajectory<T>,
    scan_points: usize,
) -> Result<Vec<ViolationWindow<T>>> {
    let tol = lit::<T>(VALIDATION_TOL);
    let grid = linalg::linspace(T::zero(), traj.horizon, scan_points);
    let h = traj.horizon / lit(scan_points as f64);
    let mut states = Vec::with_capacity(grid.len());
    for &t in &grid {
        let k = traj.arc_index_at(t).min(traj.arcs.len() - 1);
        states.push((k, traj.state_on_arc(problem, k, t)?));
    }
    let mut out = Vec::new();
    for row in 0..problem.rows() {
        let mut current: Option<ViolationWindow<T>> = None;
        for (idx, (k, s)) in states.iter().enumerate() {
            let inactive = !traj.arcs[*k].active.contains(row);
            let g = s.g[row];
            if inactive && g > tol {
                let w = current.get_or_insert(ViolationWindow {
                    row,
                    start: grid[idx],
                    end: grid[idx],
                    weight: T::zero(),
                    peak: g,
                });
                w.end = grid[idx];
                w.weight += g * h;
                w.peak = w.peak.max(g);
            } else if let Some(w) = current.take() {
                out.push(w);
            }
        }
        if let Some(w) = current.take() {
            out.push(w);
        }
    }
    // Widen interior endpoints half a grid step so the guess brackets the crossing.
    let half = h * lit(0.5);
    for w in &mut out {
        if w.start > T::zero() {
            w.start -= half;
        }
        if w.end < traj.horizon {
            w.end = (w.end + half).min(traj.horizon);
        }
        if w.end <= w.start {
            w.end = (w.start + h).min(traj.horizon);
        }
    }
    out.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}

/// Window around the worst sampled violation when the uniform scan misses it.
fn fallback_window<T: Real>(
    problem: &LtiOcProblem<T>,
    traj: &SolvedTrajectory<T>,
    row: usize,
    scan_points: usize,
) -> ViolationWindow<T> {
    let mut best = (T::zero(), lit::<T>(f64::NEG_INFINITY));
    for (k, arc) in traj.arcs.iter().enumerate() {
        if arc.active.contains(row) {
            continue;
        }
        let (a, b) = traj.arc_interval(k);
        let (t, g) = linalg::golden_max(
            |t| {
                traj.state_on_arc(problem, k, t)
                    .map(|s| s.g[row])
                    .unwrap_or(lit(f64::NEG_INFINITY))
            },
            a,
            b,
            lit(1e-12),
        );
        if g > best.1 {
            best = (t, g);
        }
    }
    let h = traj.horizon / lit(scan_points as f64);
    ViolationWindow {
        row,
        start: (best.0 - h).max(T::zero()),
        end: (best.0 + h).min(traj.horizon),
        weight: T::zero(),
        peak: best.1,
    }
}

/// Finds the optimal arc structure at `x0` and returns its solution.
pub fn detect_structure<T: Real>(
    problem: &LtiOcProblem<T>,
    x0: &DVector<T>,
) -> Result<(ArcStructure, SolvedTrajectory<T>)> {
    detect_structure_with(problem, x0, &SearchOptions::default(), None)
}

/// Like [`detect_structure`], optionally starting from a known structure and times.
pub fn detect_structure_with<T: Real>(
    problem: &LtiOcProblem<T>,
    x0: &DVector<T>,
    opts: &SearchOptions,
    warm: Option<(&ArcStructure, &[T])>,
) -> Result<(ArcStructure, SolvedTrajectory<T>)> {
    if !problem.in_box(x0.as_slice()) {
        return Err(Error::InvalidProblem(
            "parameter outside the parameter box".into(),
        ));
    }
    let horizon = problem.horizon;
    let mut timeline = match warm {
        Some((s, t)) if t.len() == s.num_events() => Timeline::from_structure(s, t, horizon),
        _ => Timeline::unconstrained(horizon),
    };
    let tol = lit::<T>(VALIDATION_TOL);
    let edge = horizon / lit(opts.scan_points as f64) * lit(0.5);
    let mut visited: HashSet<ArcStructure> = HashSet::new();

    for _ in 0..opts.max_rounds {
        let (structure, times) = match timeline.structure() {
            Ok(st) => st,
            Err(_) => {
                return Err(Error::NoStructure {
                    rounds: visited.len(),
                })
            }
        };
        if structure.num_events() > opts.max_events || !visited.insert(structure.clone()) {
            return Err(Error::NoStructure {
                rounds: visited.len(),
            });
        }
        let guess = Guess::times(times.clone());
        let traj = match solve_fixed_structure_with(problem, x0, &structure, &guess, &opts.shooting)
        {
            Ok(traj) => traj,
            Err(Error::TimeEscaped { event, side }) => {
                match side {
                    EscapeSide::Start => timeline.drop_segment(event, false),
                    EscapeSide::End => timeline.drop_segment(event + 1, true),
                }
                continue;
            }
            Err(Error::TimesCollapsed { first, .. }) => {
                timeline.drop_segment(first + 1, true);
                continue;
            }
            Err(e) => return Err(e),
        };
        let report: ValidationReport<T> = validate_solution(problem, &traj);
        if report.pass {
            return Ok((structure, traj));
        }
        let solved = Timeline::from_structure(&structure, &traj.t_switch, horizon);

        if let Some(row) = report.worst_multiplier(tol) {
            // Deactivate the row on the arc where its multiplier is most negative.
            let mut target = None;
            let mut worst = T::zero();
            for (k, arc) in traj.arcs.iter().enumerate() {
                if !arc.active.contains(row) {
                    continue;
                }
                let (a, b) = traj.arc_interval(k);
                for t in crate::shooting::arc_samples(a, b, crate::shooting::VALIDATION_SAMPLES) {
                    let mu = traj.state_on_arc(problem, k, t)?.mu[row];
                    if mu < worst {
                        worst = mu;
                        target = Some(k);
                    }
                }
            }
            if let Some(k) = target {
                timeline = solved;
                let (a, b) = (timeline.segs[k].t0, timeline.segs[k].t1);
                timeline.modify(a, b, |s| s.without(row));
                continue;
            }
        }

        let mut windows = violation_windows(problem, &traj, opts.scan_points)?;
        if windows.is_empty() {
            if let Some(row) = report.worst_violation(tol) {
                windows.push(fallback_window(problem, &traj, row, opts.scan_points));
            }
        }
        let Some(w) = windows.into_iter().next() else {
            return Err(Error::NoStructure {
                rounds: visited.len(),
            });
        };
        let a = if w.start <= edge { T::zero() } else { w.start };
        let b = if w.end >= horizon - edge {
            horizon
        } else {
            w.end
        };
        for seg in solved.segs.iter().filter(|s| s.t0 < b && s.t1 > a) {
            if let Err(Error::SingularKkt { .. }) =
                assemble_arc_system(problem, &seg.set.with(w.row))
            {
                return Err(Error::Infeasible { row: Some(w.row) });
            }
        }
        timeline = solved;
        timeline.modify(a, b, |s| s.with(w.row));
    }
    Err(Error::NoStructure {
        rounds: opts.max_rounds,
    })
}

/// Most restrictive constraint values and multipliers along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues<T> {
    /// `max g_i` over the time the row is inactive; `None` if it is never inactive.
    pub g_bar: Vec<Option<T>>,
    /// `min μ_i` over the time the row is active, excluding the endpoint where an
    /// exit or entry forces it to zero; `None` if it is never active.
    pub mu_bar: Vec<Option<T>>,
}

impl<T: Real> BoundaryValues<T> {
    /// Smallest interiority margin `min(−Ḡ_i, μ̄_i)`.
    pub fn margin(&self) -> T {
        let g = self.g_bar.iter().flatten().map(|&g| -g);
        let mu = self.mu_bar.iter().flatten().copied();
        g.chain(mu).fold(lit(f64::INFINITY), |a: T, b| a.min(b))
    }
}

/// Samples per arc used by [`boundary_values`].
pub const BOUNDARY_SAMPLES: usize = 400;

pub fn boundary_values<T: Real>(
    problem: &LtiOcProblem<T>,
    traj: &SolvedTrajectory<T>,
) -> Result<BoundaryValues<T>> {
    let c = problem.rows();
    let mut g_bar: Vec<Option<T>> = vec![None; c];
    let mut mu_bar: Vec<Option<T>> = vec![None; c];
    let events = traj.structure.events();
    for (k, arc) in traj.arcs.iter().enumerate() {
        let (a, b) = traj.arc_interval(k);
        let grid = if b > a {
            linalg::linspace(a, b, BOUNDARY_SAMPLES)
        } else {
            vec![a]
        };
        let mut states = Vec::with_capacity(grid.len());
        for &t in &grid {
            states.push(traj.state_on_arc(problem, k, t)?);
        }
        let refine_tol = lit::<T>(1e-12);
        let step = if b > a {
            (b - a) / lit(BOUNDARY_SAMPLES as f64)
        } else {
            T::zero()
        };
        for i in 0..c {
            if arc.active.contains(i) {
                // The row's own junctions pin μ_i to zero there.
                let forced_start = k > 0 && events[k - 1].row() == i;
                let forced_end = k + 1 < traj.arcs.len() && events[k].row() == i;
                let lo = usize::from(forced_start);
                let hi = if forced_end {
                    grid.len().saturating_sub(1)
                } else {
                    grid.len()
                };
                let (mut best_idx, mut best) = (None, lit::<T>(f64::INFINITY));
                for (idx, s) in states.iter().enumerate().take(hi).skip(lo) {
                    if s.mu[i] < best {
                        best = s.mu[i];
                        best_idx = Some(idx);
                    }
                }
                let Some(idx) = best_idx else { continue };
                if step > T::zero() {
                    let l = (grid[idx] - step).max(a + if forced_start { step } else { T::zero() });
                    let r = (grid[idx] + step).min(b - if forced_end { step } else { T::zero() });
                    if r > l {
                        let (_, v) = linalg::golden_max(
                            |t| {
                                traj.state_on_arc(problem, k, t)
                                    .map(|s| -s.mu[i])
                                    .unwrap_or(lit(f64::NEG_INFINITY))
                            },
                            l,
                            r,
                            refine_tol,
                        );
                        best = best.min(-v);
                    }
                }
                mu_bar[i] = Some(mu_bar[i].map_or(best, |m: T| m.min(best)));
            } else {
                let (idx, mut best) = states
                    .iter()
                    .enumerate()
                    .map(|(idx, s)| (idx, s.g[i]))
                    .fold((0, lit::<T>(f64::NEG_INFINITY)), |acc, x| {
                        if x.1 > acc.1 {
                            x
                        } else {
                            acc
                        }
                    });
                if step > T::zero() {
                    let l = (grid[idx] - step).max(a);
                    let r = (grid[idx] + step).min(b);
                    let (_, v) = linalg::golden_max(
                        |t| {
                            traj.state_on_arc(problem, k, t)
                                .map(|s| s.g[i])
                                .unwrap_or(lit(f64::NEG_INFINITY))
                        },
                        l,
                        r,
                        refine_tol,
                    );
                    best = best.max(v);
                }
                g_bar[i] = Some(g_bar[i].map_or(best, |m: T| m.max(best)));
            }
        }
    }
    Ok(BoundaryValues { g_bar, mu_bar })
}
