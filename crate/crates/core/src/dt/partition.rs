//! Critical-region partition of the condensed mpQP.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::qp::{solve_qp_with, QpSolution};
use super::DtProblem;
use crate::error::{Error, Result};
use crate::explore::HalfPlane;
use crate::lp::DenseLp;
use crate::problem::ActiveSet;

/// Regions with a smaller inscribed ball are dropped.
pub const RADIUS_TOL: f64 = 1e-8;
/// Slack used when testing parameter membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Sweep1d,
    GridSeeded,
    Combinatorial,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Sweep1d => "sweep1d",
            Strategy::GridSeeded => "grid_seeded",
            Strategy::Combinatorial => "combinatorial",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep1d" => Ok(Strategy::Sweep1d),
            "grid_seeded" => Ok(Strategy::GridSeeded),
            "combinatorial" => Ok(Strategy::Combinatorial),
            other => Err(Error::InvalidProblem(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOptions {
    pub strategy: Strategy,
    /// Grid points per axis for `GridSeeded`; defaults depend on dimension and horizon.
    pub grid: Option<usize>,
    /// Candidate cap for `Combinatorial`.
    pub budget: usize,
}

impl PartitionOptions {
    pub fn new(strategy: Strategy) -> Self {
        PartitionOptions {
            strategy,
            grid: None,
            budget: 200_000,
        }
    }

    fn grid_points(&self, dims: usize, steps: usize) -> usize {
        self.grid.unwrap_or(match dims {
            1 => 4001,
            2 if steps <= 12 => 801,
            2 => 1601,
            _ => 41,
        })
    }
}

/// One critical region with its affine laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtCriticalRegion {
    pub label: String,
    pub active: ActiveSet,
    /// `U(θ) = Ku θ + ku`.
    pub ku: DMatrix<f64>,
    pub ku0: DVector<f64>,
    /// Stacked `x_k(θ) = Kx θ + kx`, `k = 0..=N`.
    pub kx: DMatrix<f64>,
    pub kx0: DVector<f64>,
    /// Active multipliers `λ_A(θ) = L θ + l`.
    pub lambda_map: DMatrix<f64>,
    pub lambda0: DVector<f64>,
    /// Non-redundant inequalities (the parameter box is implied).
    pub inequalities: Vec<HalfPlane>,
    pub chebyshev_radius: f64,
    pub center: Vec<f64>,
    /// Exact interval in one dimension.
    pub interval: Option<(f64, f64)>,
}

impl DtCriticalRegion {
    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|h| h.contains(theta, tol))
    }

    pub fn control(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.ku * theta + &self.ku0
    }

    pub fn states(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.kx * theta + &self.kx0
    }

    pub fn multipliers(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.lambda_map * theta + &self.lambda0
    }
}

/// Critical-region partition at one discretization level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtPartition {
    pub steps: usize,
    pub h: f64,
    pub strategy: Strategy,
    pub regions: Vec<DtCriticalRegion>,
    /// Per-axis bounds of the feasible parameter set.
    pub feasible: Vec<(f64, f64)>,
    pub solves: usize,
    pub candidates: usize,
}

impl DtPartition {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// First listed region containing `theta`.
    pub fn locate(&self, theta: &[f64], tol: f64) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(theta, tol))
    }
}

fn box_rows(theta_box: &[(f64, f64)]) -> Vec<(Vec<f64>, f64)> {
    let n = theta_box.len();
    let mut out = Vec::with_capacity(2 * n);
    for (j, &(lo, hi)) in theta_box.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        out.push((e.clone(), hi));
        e[j] = -1.0;
        out.push((e, -lo));
    }
    out
}

fn inequalities_lp(objective: Vec<f64>, planes: &[HalfPlane], theta_box: &[(f64, f64)]) -> DenseLp {
    let mut lp = DenseLp::new(objective, theta_box.to_vec());
    for h in planes {
        lp.le.push((h.normal.clone(), -h.offset));
    }
    lp
}

/// Largest ball inside `planes ∩ box`: `(radius, centre)`, or `None` if empty.
fn chebyshev_ball(
    planes: &[HalfPlane],
    theta_box: &[(f64, f64)],
) -> Result<Option<(f64, Vec<f64>)>> {
    let n = theta_box.len();
    let mut objective = vec![0.0; n];
    objective.push(-1.0);
    let mut bounds = theta_box.to_vec();
    bounds.push((0.0, f64::INFINITY));
    let mut lp = DenseLp::new(objective, bounds);
    for h in planes {
        let mut row = h.normal.clone();
        row.push(1.0);
        lp.le.push((row, -h.offset));
    }
    for (mut row, rhs) in box_rows(theta_box) {
        row.push(1.0);
        lp.le.push((row, rhs));
    }
    Ok(lp.solve()?.map(|opt| (opt.x[n], opt.x[..n].to_vec())))
}

fn drop_redundant(mut planes: Vec<HalfPlane>, theta_box: &[(f64, f64)]) -> Result<Vec<HalfPlane>> {
    let mut k = 0;
    while k < planes.len() {
        let others: Vec<HalfPlane> = planes
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, h)| h.clone())
            .collect();
        let objective = planes[k].normal.iter().map(|v| -v).collect();
        let lp = inequalities_lp(objective, &others, theta_box);
        let redundant = match lp.solve()? {
            Some(opt) => -opt.value + planes[k].offset <= 1e-10,
            None => false,
        };
        if redundant {
            planes.remove(k);
        } else {
            k += 1;
        }
    }
    Ok(planes)
}

/// Builds the region of active set `active`; `Ok(None)` when it is empty or
/// lower-dimensional.
pub fn build_region(
    dt: &DtProblem<f64>,
    h_inv: &DMatrix<f64>,
    active: &ActiveSet,
) -> Result<Option<DtCriticalRegion>> {
    let (n, vars) = (dt.n(), dt.vars());
    let rows = active.rows();
    let a = rows.len();
    let fct = dt.fc.transpose();
    let (ku, ku0, lambda_map, lambda0) = if a == 0 {
        (
            -(h_inv * &fct),
            DVector::zeros(vars),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    } else {
        let ga = DMatrix::from_fn(a, vars, |r, c| dt.gc[(rows[r], c)]);
        let sa = DMatrix::from_fn(a, n, |r, c| dt.sc[(rows[r], c)]);
        let wa = DVector::from_fn(a, |r, _| dt.wc[rows[r]]);
        let hg = h_inv * ga.transpose();
        let schur = &ga * &hg;
        let condition = crate::linalg::condition_number(&schur);
        if !(condition < crate::arc::KKT_CONDITION_LIMIT) {
            return Err(Error::SingularKkt {
                rows: rows.to_vec(),
                condition,
            });
        }
        let inv = schur.try_inverse().ok_or_else(|| Error::SingularKkt {
            rows: rows.to_vec(),
            condition: f64::INFINITY,
        })?;
        let l = -(&inv * (sa + &ga * h_inv * &fct));
        let l0 = -(&inv * wa);
        let ku = -(h_inv * (&fct + ga.transpose() * &l));
        let ku0 = -(&hg * &l0);
        (ku, ku0, l, l0)
    };
    let kx = &dt.phi + &dt.gamma * &ku;
    let kx0 = &dt.gamma * &ku0;

    let mut planes = Vec::new();
    let mut push = |normal: Vec<f64>, offset: f64| -> bool {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return offset <= 1e-10;
        }
        planes.push(HalfPlane {
            normal: normal.iter().map(|v| v / norm).collect(),
            offset: offset / norm,
        });
        true
    };
    for k in 0..a {
        if !push(lambda_map.row(k).iter().map(|v| -v).collect(), -lambda0[k]) {
            return Ok(None);
        }
    }
    for i in 0..dt.rows() {
        if active.contains(i) {
            continue;
        }
        let gi = dt.gc.row(i);
        let normal = (gi * &ku - dt.sc.row(i)).iter().copied().collect();
        let offset = (gi * &ku0)[0] - dt.wc[i];
        if !push(normal, offset) {
            return Ok(None);
        }
    }
    let Some((radius, center)) = chebyshev_ball(&planes, &dt.theta_box)? else {
        return Ok(None);
    };
    if radius <= RADIUS_TOL {
        return Ok(None);
    }
    let mut inequalities = drop_redundant(planes, &dt.theta_box)?;
    inequalities.dedup();
    let interval = (n == 1).then(|| {
        let (mut lo, mut hi) = dt.theta_box[0];
        for h in &inequalities {
            let bound = -h.offset / h.normal[0];
            if h.normal[0] > 0.0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
        (lo, hi)
    });
    Ok(Some(DtCriticalRegion {
        label: String::new(),
        active: active.clone(),
        ku,
        ku0,
        kx,
        kx0,
        lambda_map,
        lambda0,
        inequalities,
        chebyshev_radius: radius,
        center,
        interval,
    }))
}

/// Per-axis extent of the feasible parameter set inside the box.
pub fn feasible_bounds(dt: &DtProblem<f64>) -> Result<Vec<(f64, f64)>> {
    let (n, vars) = (dt.n(), dt.vars());
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); vars];
    bounds.extend_from_slice(&dt.theta_box);
    let base = {
        let mut lp = DenseLp::new(vec![0.0; vars + n], bounds);
        for r in 0..dt.rows() {
            let mut row: Vec<f64> = dt.gc.row(r).iter().copied().collect();
            row.extend(dt.sc.row(r).iter().map(|v| -v));
            lp.le.push((row, dt.wc[r]));
        }
        lp
    };
    (0..n)
        .map(|j| {
            let mut extent = [0.0; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut lp = base.clone();
                lp.objective[vars + j] = sign;
                let opt = lp.solve()?.ok_or(Error::Infeasible { row: None })?;
                extent[k] = sign * opt.value;
            }
            Ok((extent[0], extent[1]))
        })
        .collect()
}

struct Builder<'a> {
    dt: &'a DtProblem<f64>,
    h_inv: DMatrix<f64>,
    solves: usize,
}

impl<'a> Builder<'a> {
    fn new(dt: &'a DtProblem<f64>) -> Result<Self> {
        let h_inv = dt
            .hc
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::InvalidProblem("condensed Hessian is not positive definite".into())
            })?
            .inverse();
        Ok(Builder {
            dt,
            h_inv,
            solves: 0,
        })
    }

    fn solve(&mut self, theta: &[f64], warm: Option<&ActiveSet>) -> Result<QpSolution> {
        self.solves += 1;
        solve_qp_with(
            self.dt,
            &self.h_inv,
            &DVector::from_column_slice(theta),
            warm,
        )
    }

    fn region(&self, active: &ActiveSet) -> Result<Option<DtCriticalRegion>> {
        match build_region(self.dt, &self.h_inv, active) {
            Err(Error::SingularKkt { .. }) => Ok(None),
            other => other,
        }
    }
}

fn sweep1d(b: &mut Builder) -> Result<Vec<DtCriticalRegion>> {
    let (lo, hi) = feasible_bounds(b.dt)?[0];
    let mut regions: Vec<DtCriticalRegion> = Vec::new();
    let mut t = lo;
    while t < hi - 1e-9 {
        let mut delta = 1e-9 * (1.0 + t.abs());
        let next = loop {
            let probe = (t + delta).min(0.5 * (t + hi));
            let warm = regions.last().map(|r| r.active.clone());
            let sol = b.solve(&[probe], warm.as_ref())?;
            if let Some(r) = b.region(&sol.active)? {
                let (_, upper) = r.interval.expect("one-dimensional region");
                if upper > t + 1e-12 && regions.last().is_none_or(|last| last.active != r.active) {
                    break r;
                }
            }
            if probe >= 0.5 * (t + hi) {
                return Err(Error::Degenerate(format!("sweep stalled at {t}")));
            }
            delta *= 10.0;
        };
        t = next.interval.expect("one-dimensional region").1;
        regions.push(next);
    }
    Ok(regions)
}

fn grid_seeded(b: &mut Builder, points_per_axis: usize) -> Result<Vec<DtCriticalRegion>> {
    let n = b.dt.n();
    let axes: Vec<Vec<f64>> =
        b.dt.theta_box
            .iter()
            .map(|&(lo, hi)| crate::linalg::linspace(lo, hi, points_per_axis - 1))
            .collect();
    let total = points_per_axis.pow(n as u32);
    let point = |mut idx: usize| -> Vec<f64> {
        let mut p = vec![0.0; n];
        for j in (0..n).rev() {
            p[j] = axes[j][idx % points_per_axis];
            idx /= points_per_axis;
        }
        p
    };
    let mut regions: Vec<DtCriticalRegion> = Vec::new();
    let mut seen: HashSet<ActiveSet> = HashSet::new();
    let mut start = 0;
    let mut chunk = 64;
    while start < total {
        let end = (start + chunk).min(total);
        let uncovered: Vec<usize> = (start..end)
            .into_par_iter()
            .filter(|&i| {
                let p = point(i);
                !regions.iter().any(|r| r.contains(&p, MEMBERSHIP_TOL))
            })
            .collect();
        let dt = b.dt;
        let h_inv = &b.h_inv;
        let solved: Vec<(usize, Result<QpSolution>)> = uncovered
            .par_iter()
            .map(|&i| {
                (
                    i,
                    solve_qp_with(dt, h_inv, &DVector::from_vec(point(i)), None),
                )
            })
            .collect();
        b.solves += solved.len();
        for (i, sol) in solved {
            let sol = match sol {
                Ok(s) => s,
                Err(Error::Infeasible { .. }) => continue,
                Err(e) => return Err(e),
            };
            let p = point(i);
            if regions.iter().any(|r| r.contains(&p, MEMBERSHIP_TOL))
                || !seen.insert(sol.active.clone())
            {
                continue;
            }
            if let Some(r) = b.region(&sol.active)? {
                regions.push(r);
            }
        }
        start = end;
        chunk = (chunk * 2).min(4096);
    }
    Ok(regions)
}

fn combinatorial(b: &mut Builder, budget: usize) -> Result<(Vec<DtCriticalRegion>, usize)> {
    let dt = b.dt;
    let (n, vars, rows) = (dt.n(), dt.vars(), dt.rows());
    let mut lp_bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); vars];
    lp_bounds.extend_from_slice(&dt.theta_box);
    let mut base = DenseLp::new(vec![0.0; vars + n], lp_bounds);
    let stacked = |r: usize| -> Vec<f64> {
        let mut row: Vec<f64> = dt.gc.row(r).iter().copied().collect();
        row.extend(dt.sc.row(r).iter().map(|v| -v));
        row
    };
    for r in 0..rows {
        base.le.push((stacked(r), dt.wc[r]));
    }
    let h_inv = &b.h_inv;
    let evaluate = |set: &Vec<usize>| -> Result<(bool, Option<DtCriticalRegion>)> {
        if !set.is_empty() {
            let ga = DMatrix::from_fn(set.len(), vars, |r, c| dt.gc[(set[r], c)]);
            if crate::linalg::rank(&ga, 1e-10) < set.len() {
                return Ok((false, None));
            }
            let mut lp = base.clone();
            for &r in set {
                lp.eq.push((stacked(r), dt.wc[r]));
            }
            if lp.solve()?.is_none() {
                return Ok((false, None));
            }
        }
        let region = match build_region(dt, h_inv, &ActiveSet::new(set.iter().copied())) {
            Err(Error::SingularKkt { .. }) => None,
            other => other?,
        };
        Ok((true, region))
    };

    let mut regions = Vec::new();
    let mut candidates = 0usize;
    let mut level: Vec<Vec<usize>> = vec![Vec::new()];
    while !level.is_empty() {
        candidates += level.len();
        if candidates > budget {
            return Err(Error::Budget { cap: budget });
        }
        let results: Vec<Result<(bool, Option<DtCriticalRegion>)>> =
            level.par_iter().map(evaluate).collect();
        let mut next = Vec::new();
        for (set, res) in level.iter().zip(results) {
            let (expand, region) = res?;
            if let Some(r) = region {
                regions.push(r);
            }
            if expand && set.len() < vars {
                let from = set.last().map_or(0, |&l| l + 1);
                for j in from..rows {
                    let mut child = set.clone();
                    child.push(j);
                    next.push(child);
                }
            }
        }
        level = next;
    }
    Ok((regions, candidates))
}

/// Computes the critical-region partition of `dt` over its parameter box.
pub fn enumerate_partition(dt: &DtProblem<f64>, options: &PartitionOptions) -> Result<DtPartition> {
    let mut b = Builder::new(dt)?;
    let feasible = feasible_bounds(dt)?;
    let (mut regions, candidates) = match options.strategy {
        Strategy::Sweep1d => {
            if dt.n() != 1 {
                return Err(Error::InvalidProblem(
                    "sweep1d needs a scalar parameter".into(),
                ));
            }
            (sweep1d(&mut b)?, 0)
        }
        Strategy::GridSeeded => {
            let g = options.grid_points(dt.n(), dt.steps);
            if g < 2 {
                return Err(Error::InvalidProblem(
                    "grid needs at least two points per axis".into(),
                ));
            }
            (grid_seeded(&mut b, g)?, 0)
        }
        Strategy::Combinatorial => combinatorial(&mut b, options.budget)?,
    };
    if dt.n() == 1 {
        regions.sort_by(|x, y| x.interval.unwrap().0.total_cmp(&y.interval.unwrap().0));
    }
    for (k, r) in regions.iter_mut().enumerate() {
        r.label = format!("CR{:02}", k + 1);
    }
    Ok(DtPartition {
        steps: dt.steps,
        h: dt.h,
        strategy: options.strategy,
        regions,
        feasible,
        solves: b.solves,
        candidates,
    })
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One row per region: bounds, active rows and the affine laws
/// (`Ku`/`Kx` rows separated by `;`).
pub fn partition_csv(part: &DtPartition) -> String {
    let mut out =
        String::from("label,active,lower,upper,inequalities,chebyshev_radius,Ku,ku,Kx,kx\n");
    for r in &part.regions {
        let (lo, hi) = r.interval.map_or((String::new(), String::new()), |(a, b)| {
            (format!("{a:.6}"), format!("{b:.6}"))
        });
        let ineq: Vec<String> = r
            .inequalities
            .iter()
            .map(|h| format!("{} | {:.6}", join(h.normal.iter().copied()), h.offset))
            .collect();
        let rows = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|row| join(row.iter().copied()))
                .collect::<Vec<_>>()
                .join("; ")
        };
        out.push_str(&format!(
            "{},\"{}\",{},{},\"{}\",{:.3e},\"{}\",\"{}\",\"{}\",\"{}\"\n",
            r.label,
            r.active,
            lo,
            hi,
            ineq.join("; "),
            r.chebyshev_radius,
            rows(&r.ku),
            join(r.ku0.iter().copied()),
            rows(&r.kx),
            join(r.kx0.iter().copied()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt::discretize_zoh;
    use crate::problem::integrator_example;

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Sweep1d,
            Strategy::GridSeeded,
            Strategy::Combinatorial,
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("simplex".parse::<Strategy>().is_err());
    }

    #[test]
    fn integrator_five_steps() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        let part = enumerate_partition(&dt, &PartitionOptions::new(Strategy::Sweep1d)).unwrap();
        assert_eq!(part.len(), 11);
        assert!((part.feasible[0].0 - (-1.0 - 2.0 / 1.4f64.powi(4))).abs() < 1e-9);
        for w in part.regions.windows(2) {
            assert!((w[0].interval.unwrap().1 - w[1].interval.unwrap().0).abs() < 1e-8);
        }
    }

    #[test]
    fn strategies_agree_on_small_instance() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        let sweep = enumerate_partition(&dt, &PartitionOptions::new(Strategy::Sweep1d)).unwrap();
        let comb =
            enumerate_partition(&dt, &PartitionOptions::new(Strategy::Combinatorial)).unwrap();
        let grid = enumerate_partition(&dt, &PartitionOptions::new(Strategy::GridSeeded)).unwrap();
        let sets = |p: &DtPartition| {
            p.regions
                .iter()
                .map(|r| r.active.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(sets(&sweep), sets(&comb));
        assert_eq!(sets(&sweep), sets(&grid));
    }

    #[test]
    fn budget_is_enforced() {
        let dt = discretize_zoh(&integrator_example::<f64>(), 5).unwrap();
        let mut opts = PartitionOptions::new(Strategy::Combinatorial);
        opts.budget = 10;
        assert!(matches!(
            enumerate_partition(&dt, &opts),
            Err(Error::Budget { cap: 10 })
        ));
    }
}
