//! Continuous-time versus discrete-time comparison.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::partition::{enumerate_partition, PartitionOptions};
use super::qp::solve_qp;
use super::{discretize_zoh, zoh, DtProblem};
use crate::error::{Error, Result};
use crate::explore::Exploration;
use crate::problem::LtiOcProblem;
use crate::structure::detect_structure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub steps: usize,
    pub h: f64,
    pub dt_regions: usize,
    pub ct_regions: usize,
    pub dt_feasible: Vec<(f64, f64)>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub steps: usize,
    pub theta: Vec<f64>,
    pub j_dt: Option<f64>,
    pub j_ct: Option<f64>,
}

impl CostRow {
    pub fn gap(&self) -> Option<f64> {
        Some((self.j_dt? - self.j_ct?).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub counts: Vec<CountRow>,
    pub costs: Vec<CostRow>,
    /// Extent of the continuous-time regions (the parameter box beyond one dimension).
    pub ct_feasible: Vec<(f64, f64)>,
}

fn ct_cost(problem: &LtiOcProblem<f64>, theta: &[f64]) -> Option<f64> {
    detect_structure(problem, &DVector::from_column_slice(theta))
        .ok()
        .map(|(_, t)| t.cost)
}

fn ct_feasible_extent(problem: &LtiOcProblem<f64>, ct: &Exploration) -> Vec<(f64, f64)> {
    let intervals: Vec<(f64, f64)> = ct.regions.iter().filter_map(|r| r.interval).collect();
    if intervals.is_empty() {
        return problem.theta_box.clone();
    }
    let lo = intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
    let hi = intervals
        .iter()
        .map(|i| i.1)
        .fold(f64::NEG_INFINITY, f64::max);
    vec![(lo, hi)]
}

/// Region counts, feasible bounds and cost gaps for each step count.
pub fn compare_ct_dt(
    problem: &LtiOcProblem<f64>,
    ct: &Exploration,
    steps: &[usize],
    thetas: &[Vec<f64>],
    options: &PartitionOptions,
) -> Result<ComparisonReport> {
    let ct_costs: Vec<Option<f64>> = thetas.iter().map(|t| ct_cost(problem, t)).collect();
    let mut counts = Vec::new();
    let mut costs = Vec::new();
    for &n_steps in steps {
        let started = Instant::now();
        let dt = discretize_zoh(problem, n_steps)?;
        let part = enumerate_partition(&dt, options)?;
        counts.push(CountRow {
            steps: n_steps,
            h: dt.h,
            dt_regions: part.len(),
            ct_regions: ct.regions.len(),
            dt_feasible: part.feasible.clone(),
            seconds: started.elapsed().as_secs_f64(),
        });
        for (theta, j_ct) in thetas.iter().zip(&ct_costs) {
            let j_dt = match solve_qp(&dt, &DVector::from_column_slice(theta), None) {
                Ok(s) => Some(s.cost),
                Err(Error::Infeasible { .. }) => None,
                Err(e) => return Err(e),
            };
            costs.push(CostRow {
                steps: n_steps,
                theta: theta.clone(),
                j_dt,
                j_ct: *j_ct,
            });
        }
    }
    Ok(ComparisonReport {
        counts,
        costs,
        ct_feasible: ct_feasible_extent(problem, ct),
    })
}

/// One time sample of the continuous-time and zero-order-hold trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub t: f64,
    pub ct_x: Vec<f64>,
    pub ct_u: Vec<f64>,
    pub dt_x: Vec<f64>,
    pub dt_u: Vec<f64>,
}

/// Samples both optimal trajectories from `theta` at `samples + 1` instants.
pub fn overlay_series(
    problem: &LtiOcProblem<f64>,
    dt: &DtProblem<f64>,
    theta: &[f64],
    samples: usize,
) -> Result<Vec<OverlayRow>> {
    let x0 = DVector::from_column_slice(theta);
    let (_, traj) = detect_structure(problem, &x0)?;
    let qp = solve_qp(dt, &x0, None)?;
    let m = dt.m();
    let samples = samples.max(1);
    (0..=samples)
        .map(|i| {
            let t = problem.horizon * i as f64 / samples as f64;
            let ct = traj.state_at(problem, t)?;
            let k = ((t / dt.h).floor() as usize).min(dt.steps - 1);
            let uk = qp.u.rows(k * m, m).into_owned();
            let (ad, bd) = zoh(&problem.a, &problem.b, t - k as f64 * dt.h)?;
            let xt = ad * dt.state(&qp.u, &x0, k) + bd * &uk;
            Ok(OverlayRow {
                t,
                ct_x: ct.x.iter().copied().collect(),
                ct_u: ct.u.iter().copied().collect(),
                dt_x: xt.iter().copied().collect(),
                dt_u: uk.iter().copied().collect(),
            })
        })
        .collect()
}
