mod common;

use mpoc::arc::{augment, point_state};
use mpoc::linalg::expm_scaled;
use mpoc::{assemble_arc_system, integrator_example, two_state_example, ActiveSet, Problem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arcs(p: &Problem) -> Vec<ActiveSet> {
    let mut out = vec![ActiveSet::empty()];
    out.extend((0..p.rows()).map(|r| ActiveSet::new([r])));
    out
}

fn examples() -> [Problem; 2] {
    [integrator_example(), two_state_example()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationarity_and_active_rows(x in prop::collection::vec(-2.0f64..2.0, 2), l in prop::collection::vec(-3.0f64..3.0, 2), t in 0.0f64..2.0) {
        for p in examples() {
            let n = p.n();
            let z0 = augment(&DVector::from_column_slice(&x[..n]), &DVector::from_column_slice(&l[..n]));
            for active in arcs(&p) {
                let arc = assemble_arc_system(&p, &active).unwrap();
                let z = arc.propagator(t).unwrap() * &z0;
                let s = point_state(&p, &arc, t, &z);
                let r = &p.r * &s.u + p.b.transpose() * &s.lambda + p.gu.transpose() * &s.mu;
                prop_assert!(r.amax() <= 1e-10 * (1.0 + z.amax()));
                for &row in active.rows() {
                    prop_assert!(s.g[row].abs() <= 1e-9 * (1.0 + z.amax()));
                }
            }
        }
    }
}

#[test]
fn central_difference_matches_generator() {
    for p in examples() {
        let n = p.n();
        let z0 = augment(
            &DVector::from_element(n, 0.4),
            &DVector::from_fn(n, |i, _| -0.3 + 0.5 * i as f64),
        );
        for active in arcs(&p) {
            let arc = assemble_arc_system(&p, &active).unwrap();
            let t = 0.7;
            let z = arc.propagator(t).unwrap() * &z0;
            let exact = (&arc.generator * &z).rows(0, 2 * n).into_owned();
            let err = |h: f64| {
                let fwd = arc.propagator(t + h).unwrap() * &z0;
                let bwd = arc.propagator(t - h).unwrap() * &z0;
                ((fwd - bwd) / (2.0 * h))
                    .rows(0, 2 * n)
                    .into_owned()
                    .metric_distance(&exact)
            };
            let (e3, e4) = (err(1e-3), err(1e-4));
            assert!(e3 < 1e-5, "{e3}");
            if e3 > 1e-10 {
                assert!(e4 < e3 / 50.0, "{e3} -> {e4}");
            } else {
                // Polynomial arcs: the central difference is exact up to rounding.
                assert!(e4 < 1e-9, "{e4}");
            }
        }
    }
}

#[test]
fn hamiltonian_constant_on_solved_arcs() {
    let mut rng = common::rng(3);
    for p in examples() {
        let mut solved = 0;
        while solved < 15 {
            let x0 = common::uniform_in_box(&mut rng, &p.theta_box);
            let Ok(traj) = common::solve(&p, &x0) else {
                continue;
            };
            solved += 1;
            for k in 0..traj.arcs.len() {
                let (a, b) = traj.arc_interval(k);
                let h0 = traj.state_on_arc(&p, k, a).unwrap().hamiltonian;
                for i in 1..=50 {
                    let t = a + (b - a) * i as f64 / 50.0;
                    let h = traj.state_on_arc(&p, k, t).unwrap().hamiltonian;
                    assert!((h - h0).abs() <= 1e-8, "{x0:?} arc {k}: {h} vs {h0}");
                }
            }
        }
    }
}

#[test]
fn matrix_exponential_matches_ode_solution() {
    let m = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.3, -1.0, 0.0, 0.0, 0.2, 1.5, -0.4]);
    let e = expm_scaled(&m, 1.3).unwrap();
    let zero = DMatrix::zeros(3, 1);
    for j in 0..3 {
        let col = common::rk4_hold(
            &m,
            &zero,
            &DVector::from_fn(3, |i, _| if i == j { 1.0 } else { 0.0 }),
            &DVector::zeros(1),
            1.3,
            4000,
        );
        assert!((e.column(j) - col).amax() < 1e-12);
    }
}

#[test]
fn unconstrained_hamiltonian_spectrum() {
    let p = two_state_example::<f64>();
    let arc = assemble_arc_system(&p, &ActiveSet::empty()).unwrap();
    let mut eig: Vec<f64> = arc
        .hamiltonian_matrix()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .collect();
    eig.sort_by(f64::total_cmp);
    let s = 2f64.sqrt();
    for (a, b) in eig.iter().zip([-s, -1.0, 1.0, s]) {
        assert!((a - b).abs() < 1e-10);
    }
}
