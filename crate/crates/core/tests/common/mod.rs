#![allow(dead_code)]

use mpoc::{detect_structure, Problem, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn uniform_in_box(rng: &mut StdRng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
}

pub fn solve(problem: &Problem, x0: &[f64]) -> mpoc::Result<Trajectory> {
    detect_structure(problem, &DVector::from_column_slice(x0)).map(|(_, t)| t)
}

/// Classical Runge–Kutta on `ẋ = A x + B u` with `u` held constant.
pub fn rk4_hold(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    steps: usize,
) -> DVector<f64> {
    let f = |x: &DVector<f64>| a * x + b * u;
    let dt = h / steps as f64;
    let mut x = x.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    x
}

/// Largest stationarity and complementarity residuals and worst sign violation
/// over `samples` points per arc.
pub fn pmp_residuals(problem: &Problem, traj: &Trajectory, samples: usize) -> (f64, f64, f64) {
    let (mut stat, mut comp, mut sign) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..traj.arcs.len() {
        let (a, b) = traj.arc_interval(k);
        for i in 0..=samples {
            let t = a + (b - a) * i as f64 / samples as f64;
            let s = traj.state_on_arc(problem, k, t).unwrap();
            let r = &problem.r * &s.u
                + problem.b.transpose() * &s.lambda
                + problem.gu.transpose() * &s.mu;
            stat = stat.max(r.amax());
            for j in 0..problem.rows() {
                comp = comp.max((s.mu[j] * s.g[j]).abs());
                sign = sign.max(-s.mu[j]).max(s.g[j]);
            }
        }
    }
    (stat, comp, sign)
}
