//! Parametric exploration of the continuous-time solution.
//!
//! Grid points of the parameter box are classified by their optimal arc
//! structure; identically classified connected sets become critical regions.
//! In one dimension region borders are located by bisection, in two
//! dimensions they are fitted as half-planes through bisected border points.
//! Switching times are fitted by polynomials over each region.

pub mod export;
pub mod polyfit;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::LtiOcProblem;
use crate::shooting::{solve_fixed_structure, validate_solution, ArcStructure, Guess};
use crate::structure::{detect_structure_with, SearchOptions};

pub use polyfit::{fit_polynomial, monomial_exponents, FittedPolynomial};

/// Classification of a single parameter value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointClass {
    Structure(ArcStructure),
    Infeasible,
    /// Structure search failed (no convergence or no admissible structure).
    Unresolved,
}

impl PointClass {
    pub fn structure(&self) -> Option<&ArcStructure> {
        match self {
            PointClass::Structure(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub class: PointClass,
    pub times: Vec<f64>,
}

/// Detects the structure at `theta`, optionally warm-started from a neighbour.
pub fn classify_point(
    problem: &LtiOcProblem<f64>,
    theta: &[f64],
    warm: Option<(&ArcStructure, &[f64])>,
) -> Classified {
    let x0 = DVector::from_column_slice(theta);
    match detect_structure_with(problem, &x0, &SearchOptions::default(), warm) {
        Ok((s, traj)) => Classified {
            class: PointClass::Structure(s),
            times: traj.t_switch,
        },
        Err(Error::Infeasible { .. }) => Classified {
            class: PointClass::Infeasible,
            times: Vec::new(),
        },
        Err(_) => Classified {
            class: PointClass::Unresolved,
            times: Vec::new(),
        },
    }
}

/// Classification of a tensor grid over the parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedGrid {
    /// Coordinates along each parameter axis.
    pub axes: Vec<Vec<f64>>,
    /// Distinct classes, in order of first appearance in the scan.
    pub classes: Vec<PointClass>,
    /// Class index per grid point; index `i * n₂ + j` in two dimensions.
    pub labels: Vec<usize>,
    /// Number of structure searches performed.
    pub solves: usize,
}

impl ClassifiedGrid {
    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.dims() {
            1 => vec![self.axes[0][idx]],
            _ => {
                let n2 = self.axes[1].len();
                vec![self.axes[0][idx / n2], self.axes[1][idx % n2]]
            }
        }
    }

    pub fn class_of(&self, idx: usize) -> &PointClass {
        &self.classes[self.labels[idx]]
    }

    /// 4-neighbour (2-neighbour in 1D) adjacency.
    pub fn neighbours(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(4);
        match self.dims() {
            1 => {
                if idx > 0 {
                    out.push(idx - 1);
                }
                if idx + 1 < self.len() {
                    out.push(idx + 1);
                }
            }
            _ => {
                let n2 = self.axes[1].len();
                let (i, j) = (idx / n2, idx % n2);
                if i > 0 {
                    out.push(idx - n2);
                }
                if i + 1 < self.axes[0].len() {
                    out.push(idx + n2);
                }
                if j > 0 {
                    out.push(idx - 1);
                }
                if j + 1 < n2 {
                    out.push(idx + 1);
                }
            }
        }
        out
    }

    /// Connected components of equally classified points, in scan order.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut k = 0;
            while k < members.len() {
                let cur = members[k];
                k += 1;
                for nb in self.neighbours(cur) {
                    if comp[nb] == usize::MAX && self.labels[nb] == self.labels[cur] {
                        comp[nb] = id;
                        members.push(nb);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

fn axes_for(problem: &LtiOcProblem<f64>, res: usize) -> Result<Vec<Vec<f64>>> {
    if res < 2 {
        return Err(Error::InvalidProblem(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    if problem.n() > 2 {
        return Err(Error::InvalidProblem(
            "exploration supports one or two parameters".into(),
        ));
    }
    Ok(problem
        .theta_box
        .iter()
        .map(|&(lo, hi)| linalg::linspace(lo, hi, res - 1))
        .collect())
}

struct Labeler {
    classes: Vec<PointClass>,
    index: HashMap<PointClass, usize>,
}

impl Labeler {
    fn new() -> Self {
        Self {
            classes: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn id(&mut self, c: &PointClass) -> usize {
        if let Some(&i) = self.index.get(c) {
            return i;
        }
        let i = self.classes.len();
        self.classes.push(c.clone());
        self.index.insert(c.clone(), i);
        i
    }
}

/// Classifies every point of a `res`-per-axis grid by direct search.
pub fn classify_grid(problem: &LtiOcProblem<f64>, res: usize) -> Result<ClassifiedGrid> {
    classify_grid_refined(problem, res, res)
}

/// Classifies a `res`-per-axis grid starting from a `coarse`-per-axis scan.
///
/// Cells of the coarse grid whose corners agree are filled without further
/// solves; the others are bisected until neighbouring points are resolved.
/// Features smaller than one coarse cell can therefore be missed.
pub fn classify_grid_refined(
    problem: &LtiOcProblem<f64>,
    res: usize,
    coarse: usize,
) -> Result<ClassifiedGrid> {
    let axes = axes_for(problem, res)?;
    let coarse = coarse.clamp(2, res);
    let dims = axes.len();
    let coarse_idx: Vec<usize> = (0..coarse)
        .map(|k| ((res - 1) as f64 * k as f64 / (coarse - 1) as f64).round() as usize)
        .collect();
    let total = res.pow(dims as u32);
    let mut known: Vec<Option<Classified>> = vec![None; total];
    let point = |idx: usize| -> Vec<f64> {
        if dims == 1 {
            vec![axes[0][idx]]
        } else {
            vec![axes[0][idx / res], axes[1][idx % res]]
        }
    };
    let mut solves = 0usize;

    // Scan the coarse grid line by line, warm-starting along each line.
    let lines: Vec<Vec<usize>> = if dims == 1 {
        vec![coarse_idx.clone()]
    } else {
        coarse_idx
            .iter()
            .map(|&i| coarse_idx.iter().map(|&j| i * res + j).collect())
            .collect()
    };
    let scanned: Vec<Vec<(usize, Classified)>> = lines
        .par_iter()
        .map(|line| {
            let mut out: Vec<(usize, Classified)> = Vec::with_capacity(line.len());
            for &idx in line {
                let warm = out.last().and_then(|(_, c): &(usize, Classified)| {
                    c.class.structure().map(|s| (s.clone(), c.times.clone()))
                });
                let c = classify_point(
                    problem,
                    &point(idx),
                    warm.as_ref().map(|(s, t)| (s, t.as_slice())),
                );
                out.push((idx, c));
            }
            out
        })
        .collect();
    for (idx, c) in scanned.into_iter().flatten() {
        known[idx] = Some(c);
        solves += 1;
    }

    // Cells as index boxes [i0, i1] x [j0, j1] (j unused in 1D).
    let mut cells: Vec<[usize; 4]> = Vec::new();
    for w in coarse_idx.windows(2) {
        if dims == 1 {
            cells.push([w[0], w[1], 0, 0]);
        } else {
            for v in coarse_idx.windows(2) {
                cells.push([w[0], w[1], v[0], v[1]]);
            }
        }
    }
    let flat = |i: usize, j: usize| if dims == 1 { i } else { i * res + j };
    let corners = |c: &[usize; 4]| -> Vec<usize> {
        if dims == 1 {
            vec![c[0], c[1]]
        } else {
            vec![
                flat(c[0], c[2]),
                flat(c[0], c[3]),
                flat(c[1], c[2]),
                flat(c[1], c[3]),
            ]
        }
    };
    let mut uniform: Vec<[usize; 4]> = Vec::new();
    while !cells.is_empty() {
        let mut next = Vec::new();
        let mut pending: BTreeMap<usize, usize> = BTreeMap::new();
        for c in cells {
            let cs = corners(&c);
            let first = &known[cs[0]].as_ref().expect("corner classified").class;
            if cs
                .iter()
                .all(|&k| &known[k].as_ref().expect("corner classified").class == first)
            {
                uniform.push(c);
                continue;
            }
            let (i0, i1, j0, j1) = (c[0], c[1], c[2], c[3]);
            let im = (i0 + i1) / 2;
            let jm = (j0 + j1) / 2;
            let split_i = i1 - i0 > 1;
            let split_j = dims == 2 && j1 - j0 > 1;
            if !split_i && !split_j {
                continue;
            }
            let is: Vec<usize> = if split_i {
                vec![i0, im, i1]
            } else {
                vec![i0, i1]
            };
            let js: Vec<usize> = if dims == 1 {
                vec![0, 0]
            } else if split_j {
                vec![j0, jm, j1]
            } else {
                vec![j0, j1]
            };
            for &i in &is {
                for &j in js.iter().take(if dims == 1 { 1 } else { js.len() }) {
                    let k = flat(i, j);
                    if known[k].is_none() {
                        pending.insert(k, cs[0]);
                    }
                }
            }
            for a in is.windows(2) {
                if dims == 1 {
                    next.push([a[0], a[1], 0, 0]);
                } else {
                    for b in js.windows(2) {
                        next.push([a[0], a[1], b[0], b[1]]);
                    }
                }
            }
        }
        let work: Vec<(usize, usize)> = pending.into_iter().collect();
        let results: Vec<(usize, Classified)> = work
            .par_iter()
            .map(|&(k, from)| {
                let warm = known[from]
                    .as_ref()
                    .and_then(|c| c.class.structure().map(|s| (s, c.times.as_slice())));
                (k, classify_point(problem, &point(k), warm))
            })
            .collect();
        solves += results.len();
        for (k, c) in results {
            known[k] = Some(c);
        }
        cells = next;
    }
    for c in uniform {
        let fill = known[corners(&c)[0]].as_ref().unwrap().class.clone();
        let jr = if dims == 1 { 0..=0 } else { c[2]..=c[3] };
        for i in c[0]..=c[1] {
            for j in jr.clone() {
                let k = flat(i, j);
                if known[k].is_none() {
                    known[k] = Some(Classified {
                        class: fill.clone(),
                        times: Vec::new(),
                    });
                }
            }
        }
    }

    let mut labeler = Labeler::new();
    let labels = known
        .iter()
        .map(|c| labeler.id(&c.as_ref().expect("every grid point classified").class))
        .collect();
    Ok(ClassifiedGrid {
        axes,
        classes: labeler.classes,
        labels,
        solves,
    })
}

/// Whether `structure` yields a validated solution at `theta`; updates `times` on success.
fn validates(
    problem: &LtiOcProblem<f64>,
    theta: &[f64],
    structure: &ArcStructure,
    times: &mut Option<Vec<f64>>,
) -> bool {
    let guess = times.clone().map(Guess::times).unwrap_or_default();
    match solve_fixed_structure(
        problem,
        &DVector::from_column_slice(theta),
        structure,
        &guess,
    ) {
        Ok(traj) if validate_solution(problem, &traj).pass => {
            *times = Some(traj.t_switch);
            true
        }
        _ => false,
    }
}

/// Bisects between two differently classified points to within `tol`.
///
/// Each midpoint is first tested against the two end structures, warm-started
/// from the nearest point where each held; a full structure search is run only
/// when neither validates.
fn bisect_segment(
    problem: &LtiOcProblem<f64>,
    a: &[f64],
    b: &[f64],
    class_a: &PointClass,
    class_b: &PointClass,
    tol: f64,
) -> Vec<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let len = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let at = |s: f64| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x + s * (y - x))
            .collect::<Vec<_>>()
    };
    let (mut times_a, mut times_b) = (None, None);
    while (hi - lo) * len > tol {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        let in_a = if class_a
            .structure()
            .is_some_and(|s| validates(problem, &p, s, &mut times_a))
        {
            true
        } else if class_b
            .structure()
            .is_some_and(|s| validates(problem, &p, s, &mut times_b))
        {
            false
        } else {
            &classify_point(problem, &p, None).class == class_a
        };
        if in_a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Tolerance of border bisection.
pub const BORDER_TOL: f64 = 1e-6;

/// Breakpoint between the classes found at the two ends of `bracket`.
pub fn refine_boundary_1d(problem: &LtiOcProblem<f64>, bracket: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bracket;
    let a = classify_point(problem, &[lo], None).class;
    let b = classify_point(problem, &[hi], None).class;
    if a == b {
        return Err(Error::SameStructure);
    }
    Ok(bisect_segment(problem, &[lo], &[hi], &a, &b, BORDER_TOL)[0])
}

/// Half-plane `normal·θ + offset ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfPlane {
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.normal
            .iter()
            .zip(theta)
            .map(|(a, t)| a * t)
            .sum::<f64>()
            + self.offset
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        self.value(theta) <= tol
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: self.normal.iter().map(|v| -v).collect(),
            offset: -self.offset,
        }
    }

    /// Rescaled so that coefficient `k` equals `target` in magnitude, keeping orientation.
    pub fn scaled_to(&self, k: usize, target: f64) -> Self {
        let f = target / self.normal[k].abs();
        Self {
            normal: self.normal.iter().map(|v| v * f).collect(),
            offset: self.offset * f,
        }
    }
}

/// Fitted border between two regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderFit {
    /// Unit-normal line through the border points; `None` if the border is not affine.
    pub line: Option<HalfPlane>,
    pub residual: f64,
    pub points: Vec<Vec<f64>>,
}

/// Minimum number of bracketing pairs needed to fit a border.
pub const MIN_BORDER_PAIRS: usize = 10;

/// Bracketing grid edges between the class sets `a` and `b`.
fn bracketing_pairs(grid: &ClassifiedGrid, a: &[usize], b: &[usize]) -> Vec<(usize, usize)> {
    let in_b: std::collections::HashSet<usize> = b.iter().copied().collect();
    let mut out = Vec::new();
    for &p in a {
        for nb in grid.neighbours(p) {
            if in_b.contains(&nb) {
                out.push((p, nb));
            }
        }
    }
    out
}

/// Total-least-squares line through `points`; returns the line and max perpendicular residual.
pub fn tls_line(points: &[Vec<f64>]) -> (HalfPlane, f64) {
    let k = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / k;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / k;
    let m = DMatrix::from_fn(points.len(), 2, |r, c| {
        if c == 0 {
            points[r][0] - cx
        } else {
            points[r][1] - cy
        }
    });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smallest = if svd.singular_values[0] < svd.singular_values[1] {
        0
    } else {
        1
    };
    let normal = vec![vt[(smallest, 0)], vt[(smallest, 1)]];
    let offset = -(normal[0] * cx + normal[1] * cy);
    let line = HalfPlane { normal, offset };
    let residual = points
        .iter()
        .map(|p| line.value(p).abs())
        .fold(0.0, f64::max);
    (line, residual)
}

/// Fits the border between grid components `a` and `b` (point index lists).
pub fn fit_region_boundaries_2d(
    problem: &LtiOcProblem<f64>,
    grid: &ClassifiedGrid,
    a: &[usize],
    b: &[usize],
) -> Result<BorderFit> {
    let pairs = bracketing_pairs(grid, a, b);
    if pairs.len() < MIN_BORDER_PAIRS {
        return Err(Error::TooFewSamples {
            retained: pairs.len(),
            needed: MIN_BORDER_PAIRS,
        });
    }
    let points: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(p, q)| {
            bisect_segment(
                problem,
                &grid.point(p),
                &grid.point(q),
                grid.class_of(p),
                grid.class_of(q),
                BORDER_TOL,
            )
        })
        .collect();
    let (mut line, residual) = tls_line(&points);
    // Orient so that the `a` side is `≤ 0`.
    if line.value(&grid.point(pairs[0].0)) > 0.0 {
        line = line.flipped();
    }
    if residual > 1e-3 * problem.box_diameter() {
        return Err(Error::NonAffineBoundary { residual, points });
    }
    Ok(BorderFit {
        line: Some(line),
        residual,
        points,
    })
}

/// Border of a region against one neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBorder {
    pub neighbour: String,
    pub fit: BorderFit,
}

/// Per-arc data exported with a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub active: crate::problem::ActiveSet,
    /// Generator on `(x, λ, 1)`, row-major.
    pub generator: Vec<Vec<f64>>,
    pub control_map: Vec<Vec<f64>>,
}

/// Continuous-time critical region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegionCT {
    pub label: String,
    pub structure: ArcStructure,
    pub description: String,
    /// Closed interval in one dimension.
    pub interval: Option<(f64, f64)>,
    /// Half-plane borders in two dimensions, oriented so the region is `≤ 0`.
    pub inequalities: Vec<HalfPlane>,
    pub borders: Vec<RegionBorder>,
    pub t_s_exact: Option<String>,
    pub t_s_fit: Vec<FittedPolynomial>,
    pub seed: Vec<f64>,
    pub grid_points: usize,
    pub arcs: Vec<ArcRecord>,
}

impl CriticalRegionCT {
    /// Membership by interval or half-planes, within `tol`.
    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        if let Some((lo, hi)) = self.interval {
            return theta[0] >= lo - tol && theta[0] <= hi + tol;
        }
        self.inequalities.iter().all(|h| h.contains(theta, tol))
    }

    /// Fitted switching times at `theta`.
    pub fn switching_times(&self, theta: &[f64]) -> Vec<f64> {
        self.t_s_fit.iter().map(|f| f.eval(theta)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOptions {
    /// Grid points per axis; defaults to 401 in 1D and 41 in 2D.
    pub grid: Option<usize>,
    /// Grid points per axis solved directly before refinement.
    pub coarse: usize,
    pub fit_degree: usize,
    pub fit_samples_1d: usize,
    pub fit_samples_2d: usize,
    pub seeds: Vec<Vec<f64>>,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        Self {
            grid: None,
            coarse: 41,
            fit_degree: 3,
            fit_samples_1d: 20,
            fit_samples_2d: 200,
            seeds: Vec::new(),
        }
    }
}

/// Result of a parametric exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub dims: usize,
    pub grid: usize,
    pub regions: Vec<CriticalRegionCT>,
    /// Infeasible intervals (1D) or grid points (2D).
    pub infeasible_intervals: Vec<(f64, f64)>,
    pub infeasible_points: Vec<Vec<f64>>,
    /// Grid points where no structure could be determined.
    pub unresolved_points: Vec<Vec<f64>>,
    pub solves: usize,
}

impl Exploration {
    /// First region containing `theta`.
    pub fn locate(&self, theta: &[f64], tol: f64) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(theta, tol))
    }
}

fn arc_records(problem: &LtiOcProblem<f64>, structure: &ArcStructure) -> Result<Vec<ArcRecord>> {
    let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
    structure
        .arcs()
        .iter()
        .map(|a| {
            let d = crate::arc::assemble_arc_system(problem, a)?;
            Ok(ArcRecord {
                active: a.clone(),
                generator: rows(&d.generator),
                control_map: rows(&d.u_map),
            })
        })
        .collect()
}

/// Fits one polynomial per switching time over the samples that share `structure`.
pub fn fit_switching_times(
    problem: &LtiOcProblem<f64>,
    structure: &ArcStructure,
    samples: &[Vec<f64>],
    degree: usize,
) -> Result<Vec<FittedPolynomial>> {
    let ns = structure.num_events();
    if ns == 0 {
        return Ok(Vec::new());
    }
    let guess_times: Vec<f64> = (1..=ns)
        .map(|k| problem.horizon * k as f64 / (ns + 1) as f64)
        .collect();
    let solved: Vec<Option<(Vec<f64>, Vec<f64>)>> = samples
        .par_iter()
        .map(|theta| {
            let c = classify_point(problem, theta, Some((structure, &guess_times)));
            (c.class.structure() == Some(structure)).then(|| (theta.clone(), c.times))
        })
        .collect();
    let retained: Vec<(Vec<f64>, Vec<f64>)> = solved.into_iter().flatten().collect();
    let points: Vec<Vec<f64>> = retained.iter().map(|(p, _)| p.clone()).collect();
    (0..ns)
        .map(|s| {
            let values: Vec<f64> = retained.iter().map(|(_, t)| t[s]).collect();
            fit_polynomial(&points, &values, degree)
        })
        .collect()
}

/// Radical-inverse (Halton) point `k` in the unit square.
fn halton(k: usize) -> [f64; 2] {
    let inv = |mut i: usize, base: usize| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    [inv(k, 2), inv(k, 3)]
}

fn structure_order(s: &ArcStructure) -> (Vec<usize>, std::cmp::Reverse<usize>, String) {
    let mut rows: Vec<usize> = s.arcs().iter().flat_map(|a| a.rows().to_vec()).collect();
    rows.sort_unstable();
    rows.dedup();
    (rows, std::cmp::Reverse(s.arcs().len()), s.to_string())
}

/// Builds the critical-region partition of the parameter box.
pub fn explore_regions(problem: &LtiOcProblem<f64>, opts: &ExploreOptions) -> Result<Exploration> {
    let dims = problem.n();
    let res = opts.grid.unwrap_or(if dims == 1 { 401 } else { 41 });
    let grid = classify_grid_refined(problem, res, opts.coarse.min(res))?;
    let comps = grid.components();

    let mut infeasible_points = Vec::new();
    let mut unresolved_points = Vec::new();
    let mut region_comps: Vec<usize> = Vec::new();
    for (ci, members) in comps.iter().enumerate() {
        match grid.class_of(members[0]) {
            PointClass::Structure(_) => region_comps.push(ci),
            PointClass::Infeasible => {
                infeasible_points.extend(members.iter().map(|&p| grid.point(p)))
            }
            PointClass::Unresolved => {
                unresolved_points.extend(members.iter().map(|&p| grid.point(p)))
            }
        }
    }
    if region_comps.is_empty() {
        return Err(Error::Infeasible { row: None });
    }

    let mut regions = Vec::new();
    let mut infeasible_intervals = Vec::new();
    if dims == 1 {
        // Components are contiguous runs in scan order.
        let mut breaks = vec![problem.theta_box[0].0];
        for w in comps.windows(2) {
            let (p, q) = (*w[0].last().unwrap(), w[1][0]);
            let bp = bisect_segment(
                problem,
                &grid.point(p),
                &grid.point(q),
                grid.class_of(p),
                grid.class_of(q),
                BORDER_TOL,
            )[0];
            breaks.push(bp);
        }
        breaks.push(problem.theta_box[0].1);
        for (ci, members) in comps.iter().enumerate() {
            let (lo, hi) = (breaks[ci], breaks[ci + 1]);
            match grid.class_of(members[0]) {
                PointClass::Structure(s) => {
                    let label = format!("CR{:02}", regions.len() + 1);
                    regions.push(CriticalRegionCT {
                        label,
                        structure: s.clone(),
                        description: s.label(problem),
                        interval: Some((lo, hi)),
                        inequalities: Vec::new(),
                        borders: Vec::new(),
                        t_s_exact: None,
                        t_s_fit: Vec::new(),
                        seed: grid.point(members[members.len() / 2]),
                        grid_points: members.len(),
                        arcs: arc_records(problem, s)?,
                    });
                }
                PointClass::Infeasible => infeasible_intervals.push((lo, hi)),
                PointClass::Unresolved => {}
            }
        }
        let shrink = 2.0 * BORDER_TOL;
        for r in &mut regions {
            let (lo, hi) = r.interval.unwrap();
            if r.structure.num_events() == 0 || hi - lo <= 2.0 * shrink {
                continue;
            }
            let samples: Vec<Vec<f64>> =
                linalg::linspace(lo + shrink, hi - shrink, opts.fit_samples_1d.max(2) - 1)
                    .into_iter()
                    .map(|x| vec![x])
                    .collect();
            r.t_s_fit = fit_switching_times(problem, &r.structure, &samples, opts.fit_degree)
                .unwrap_or_default();
        }
    } else {
        let mut order = region_comps.clone();
        order.sort_by_key(|&ci| {
            let s = grid.class_of(comps[ci][0]).structure().unwrap().clone();
            (structure_order(&s), comps[ci][0])
        });
        let labels: HashMap<usize, String> = order
            .iter()
            .enumerate()
            .map(|(k, &ci)| (ci, format!("CR{:02}", k + 1)))
            .collect();
        for &ci in &order {
            let members = &comps[ci];
            let s = grid.class_of(members[0]).structure().unwrap().clone();
            let mut borders = Vec::new();
            let mut inequalities = Vec::new();
            for (cj, other) in comps.iter().enumerate() {
                if cj == ci || bracketing_pairs(&grid, members, other).is_empty() {
                    continue;
                }
                let neighbour =
                    labels
                        .get(&cj)
                        .cloned()
                        .unwrap_or_else(|| match grid.class_of(other[0]) {
                            PointClass::Infeasible => "infeasible".into(),
                            _ => "unresolved".into(),
                        });
                let fit = match fit_region_boundaries_2d(problem, &grid, members, other) {
                    Ok(f) => f,
                    Err(Error::NonAffineBoundary { residual, points }) => BorderFit {
                        line: None,
                        residual,
                        points,
                    },
                    Err(Error::TooFewSamples { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if let Some(h) = &fit.line {
                    inequalities.push(h.clone());
                }
                borders.push(RegionBorder { neighbour, fit });
            }
            regions.push(CriticalRegionCT {
                label: labels[&ci].clone(),
                description: s.label(problem),
                structure: s.clone(),
                interval: None,
                inequalities,
                borders,
                t_s_exact: None,
                t_s_fit: Vec::new(),
                seed: grid.point(members[members.len() / 2]),
                grid_points: members.len(),
                arcs: arc_records(problem, &s)?,
            });
        }
        for r in &mut regions {
            if r.structure.num_events() == 0 {
                continue;
            }
            let samples = region_samples(problem, r, opts.fit_samples_2d);
            r.t_s_fit = fit_switching_times(problem, &r.structure, &samples, opts.fit_degree)
                .unwrap_or_default();
        }
    }
    for seed in &opts.seeds {
        let c = classify_point(problem, seed, None);
        if let PointClass::Structure(s) = c.class {
            if !regions.iter().any(|r| r.structure == s) {
                regions.push(CriticalRegionCT {
                    label: format!("CR{:02}", regions.len() + 1),
                    description: s.label(problem),
                    arcs: arc_records(problem, &s)?,
                    structure: s,
                    interval: None,
                    inequalities: Vec::new(),
                    borders: Vec::new(),
                    t_s_exact: None,
                    t_s_fit: Vec::new(),
                    seed: seed.clone(),
                    grid_points: 0,
                });
            }
        }
    }
    Ok(Exploration {
        dims,
        grid: res,
        regions,
        infeasible_intervals,
        infeasible_points,
        unresolved_points,
        solves: grid.solves,
    })
}

/// Up to `count` quasi-random points of the box lying inside `region`.
pub fn region_samples(
    problem: &LtiOcProblem<f64>,
    region: &CriticalRegionCT,
    count: usize,
) -> Vec<Vec<f64>> {
    let bx = &problem.theta_box;
    let mut out = Vec::with_capacity(count);
    let mut k = 1;
    while out.len() < count && k < 200 * count {
        let h = halton(k);
        let p: Vec<f64> = (0..bx.len())
            .map(|d| bx[d].0 + h[d] * (bx[d].1 - bx[d].0))
            .collect();
        if region.contains(&p, -BORDER_TOL) {
            out.push(p);
        }
        k += 1;
    }
    out
}
