mod common;

use mpoc::dt::{dense_oracle, discretize_zoh, solve_qp, zoh_policy_cost};
use mpoc::{evaluate_arc, integrator_example, two_state_example, validate_solution};
use nalgebra::DVector;

#[test]
fn junction_continuity() {
    let mut rng = common::rng(5);
    for p in [integrator_example::<f64>(), two_state_example()] {
        let mut switched = 0;
        let mut tries = 0;
        while switched < 10 && tries < 400 {
            tries += 1;
            let x0 = common::uniform_in_box(&mut rng, &p.theta_box);
            let Ok(traj) = common::solve(&p, &x0) else {
                continue;
            };
            assert!(validate_solution(&p, &traj).pass);
            for s in 0..traj.t_switch.len() {
                switched += 1;
                let (a, b) = traj.junction_states(&p, s).unwrap();
                assert!((a.hamiltonian - b.hamiltonian).abs() <= 1e-8);
                assert!((&a.u - &b.u).amax() <= 1e-8);
                assert!((&a.x - &b.x).amax() <= 1e-12);
            }
        }
        assert!(switched >= 10, "only {switched} switches sampled");
    }
}

#[test]
fn exit_conditions_agree() {
    let p = integrator_example::<f64>();
    for x0 in [-0.6, -0.7, -0.8, -0.9] {
        let traj = common::solve(&p, &[x0]).unwrap();
        let ts = traj.t_switch[0];
        let (active, free) = (&traj.arcs[0], &traj.arcs[1]);
        let row = active.active.rows()[0];
        // Constraint value under the inactive-side law at the active-arc point.
        let g_free = |t: f64| {
            let s = evaluate_arc(&p, active, 0.0, &traj.x0, &traj.lambda0, t).unwrap();
            let z = mpoc::arc::augment(&s.x, &s.lambda);
            p.constraint_values(&s.x, &free.control(&z))[row]
        };
        let (mut lo, mut hi) = (ts - 0.05, ts + 0.05);
        assert!(g_free(lo).signum() != g_free(hi).signum());
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g_free(mid).signum() == g_free(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(
            (0.5 * (lo + hi) - ts).abs() <= 1e-8,
            "{x0}: {} vs {ts}",
            0.5 * (lo + hi)
        );
    }
}

#[test]
fn switching_time_unique_and_lipschitz() {
    let p = integrator_example::<f64>();
    let (lo, hi) = (-1.0 + 0.5 * (-2.0f64).exp(), -0.5);
    let delta = 1e-4;
    for i in 0..10 {
        let x0 = lo + (hi - lo) * (i as f64 + 0.5) / 10.0;
        let traj = common::solve(&p, &[x0]).unwrap();
        let arc = &traj.arcs[0];
        let row = arc.active.rows()[0];
        let signs: Vec<bool> = (1..1000)
            .map(|k| {
                evaluate_arc(
                    &p,
                    arc,
                    0.0,
                    &traj.x0,
                    &traj.lambda0,
                    p.horizon * k as f64 / 1000.0,
                )
                .unwrap()
                .mu[row]
                    > 0.0
            })
            .collect();
        assert_eq!(signs.windows(2).filter(|w| w[0] != w[1]).count(), 1, "{x0}");
        let shifted = common::solve(&p, &[x0 + delta]).unwrap().t_switch[0];
        let c = 1.0 / (x0 + 1.0);
        assert!((shifted - traj.t_switch[0]).abs() <= 2.0 * c * delta);
    }
}

#[test]
fn origin_is_free() {
    let p = integrator_example::<f64>();
    let traj = common::solve(&p, &[0.0]).unwrap();
    assert!(traj.t_switch.is_empty());
    assert_eq!(traj.cost, 0.0);
}

#[test]
fn continuous_cost_bounds_feasible_hold_policies() {
    let mut checked = 0;
    for (p, points) in [
        (
            integrator_example::<f64>(),
            vec![vec![0.3], vec![-0.8], vec![1.5]],
        ),
        (
            two_state_example(),
            vec![vec![0.2, -0.3], vec![-0.95, -1.65], vec![1.0, 0.1]],
        ),
    ] {
        for x0 in points {
            let j_ct = common::solve(&p, &x0).unwrap().cost;
            let theta = DVector::from_column_slice(&x0);
            let mut policies = Vec::new();
            for n in [10, 40] {
                let d = discretize_zoh(&p, n).unwrap();
                let qp = solve_qp(&d, &theta, None).unwrap();
                policies.push(
                    (0..n)
                        .map(|k| qp.u.rows(k * p.m(), p.m()).into_owned())
                        .collect::<Vec<_>>(),
                );
            }
            policies.push(dense_oracle(&p, &theta, 2000).unwrap().u);
            for inputs in policies {
                let (j, worst) = zoh_policy_cost(&p, &theta, &inputs, 4).unwrap();
                if worst <= 1e-9 {
                    checked += 1;
                    assert!(j_ct <= j + 1e-6, "{x0:?}, N={}: {j_ct} > {j}", inputs.len());
                }
            }
        }
    }
    assert!(checked >= 6, "{checked}");
}

#[test]
fn junction_residual_of_perturbed_switch() {
    let p = integrator_example::<f64>();
    let structure =
        mpoc::ArcStructure::new(vec![mpoc::ActiveSet::new([1]), mpoc::ActiveSet::empty()]).unwrap();
    let x0 = DVector::from_element(1, -0.8);
    for shift in [0.0, 0.1] {
        let ts = 2.5f64.ln() + shift;
        let r = |l0: f64| {
            mpoc::shoot_residuals(&p, &structure, &DVector::from_vec(vec![l0, ts]), &x0).unwrap()
        };
        // The terminal residual is affine in λ₀ for fixed switching times.
        let (r0, r1) = (r(0.0), r(1.0));
        let l0 = -r0[0] / (r1[0] - r0[0]);
        let res = r(l0);
        let x_ts = 0.2 * ts.exp() - 1.0;
        assert!(res[0].abs() < 1e-12);
        assert!(
            (res[1] - (-2.0 * x_ts - 1.0)).abs() < 1e-12,
            "{shift}: {}",
            res[1]
        );
    }
    let r = mpoc::shoot_residuals(
        &p,
        &structure,
        &DVector::from_vec(vec![-1.7, 2.5f64.ln()]),
        &x0,
    )
    .unwrap();
    assert!(r.amax() < 1e-12);
}
