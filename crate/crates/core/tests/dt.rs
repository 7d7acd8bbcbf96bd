mod common;

use mpoc::dt::{
    dense_oracle, discretize_zoh, enumerate_partition, solve_qp, DtPartition, PartitionOptions,
    Strategy,
};
use mpoc::{integrator_example, two_state_example, Problem};
use nalgebra::DVector;

fn partition(p: &Problem, steps: usize) -> DtPartition {
    let strategy = if p.n() == 1 {
        Strategy::Sweep1d
    } else {
        Strategy::GridSeeded
    };
    enumerate_partition(
        &discretize_zoh(p, steps).unwrap(),
        &PartitionOptions::new(strategy),
    )
    .unwrap()
}

#[test]
fn partition_covers_feasible_parameters() {
    for (p, steps) in [(integrator_example::<f64>(), 10), (two_state_example(), 8)] {
        let d = discretize_zoh(&p, steps).unwrap();
        let part = partition(&p, steps);
        let mut rng = common::rng(41);
        let mut tested = 0;
        while tested < 1000 {
            let theta = common::uniform_in_box(&mut rng, &part.feasible);
            let Ok(qp) = solve_qp(&d, &DVector::from_column_slice(&theta), None) else {
                continue;
            };
            tested += 1;
            let i = part
                .locate(&theta, mpoc::dt::partition::MEMBERSHIP_TOL)
                .unwrap_or_else(|| panic!("{theta:?} uncovered"));
            let strict = part
                .regions
                .iter()
                .filter(|r| r.contains(&theta, -1e-7))
                .count();
            assert!(strict <= 1, "{theta:?} strictly inside {strict} regions");
            assert!(
                (part.regions[i].control(&DVector::from_column_slice(&theta)) - &qp.u).amax()
                    <= 1e-7
            );
        }
    }
}

#[test]
fn laws_agree_with_point_solver_in_every_region() {
    let mut rng = common::rng(43);
    for (p, steps) in [(integrator_example::<f64>(), 5), (two_state_example(), 5)] {
        let d = discretize_zoh(&p, steps).unwrap();
        for r in &partition(&p, steps).regions {
            let mut checked = 0;
            let mut tries = 0;
            while checked < 100 && tries < 200_000 {
                tries += 1;
                let theta = common::uniform_in_box(&mut rng, &p.theta_box);
                if !r.contains(&theta, -1e-7) {
                    continue;
                }
                checked += 1;
                let t = DVector::from_column_slice(&theta);
                let qp = solve_qp(&d, &t, None).unwrap();
                assert!(
                    (r.control(&t) - &qp.u).amax() <= 1e-7,
                    "{} at {theta:?}",
                    r.label
                );
                assert!((r.states(&t) - d.states(&qp.u, &t)).amax() <= 1e-7);
            }
            assert!(checked > 0, "{} never sampled", r.label);
        }
    }
}

#[test]
fn zoh_nodes_are_exact() {
    for p in [integrator_example::<f64>(), two_state_example()] {
        let d = discretize_zoh(&p, 10).unwrap();
        let theta = DVector::from_fn(p.n(), |i, _| 0.6 - 0.9 * i as f64);
        let qp = solve_qp(&d, &theta, None).unwrap();
        let mut x = theta.clone();
        for k in 0..10 {
            let u = qp.u.rows(k * p.m(), p.m()).into_owned();
            x = common::rk4_hold(&p.a, &p.b, &x, &u, d.h, 2000);
            assert!((d.state(&qp.u, &theta, k + 1) - &x).amax() <= 1e-10);
        }
    }
}

#[test]
fn cost_gap_shrinks_with_steps() {
    let p = integrator_example::<f64>();
    let j_ct = common::solve(&p, &[0.3]).unwrap().cost;
    let gaps: Vec<f64> = [5, 10, 20, 40]
        .iter()
        .map(|&n| {
            (solve_qp(
                &discretize_zoh(&p, n).unwrap(),
                &DVector::from_element(1, 0.3),
                None,
            )
            .unwrap()
            .cost
                - j_ct)
                .abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn feasible_set_contracts_toward_continuous_bound() {
    let p = integrator_example::<f64>();
    let lower: Vec<f64> = [5, 10, 15, 30]
        .iter()
        .map(|&n| partition(&p, n).feasible[0].0)
        .collect();
    let ct = -1.0 - 2.0 * (-2.0f64).exp();
    assert!(lower.windows(2).all(|w| w[1] >= w[0]), "{lower:?}");
    assert!(lower.iter().all(|&l| l < ct));
}

#[test]
fn integrator_region_counts() {
    let p = integrator_example::<f64>();
    let counts: Vec<usize> = [5, 10, 15, 30]
        .iter()
        .map(|&n| partition(&p, n).len())
        .collect();
    assert_eq!(counts, [11, 21, 31, 61]);
}

#[test]
fn two_state_region_counts() {
    let p = two_state_example::<f64>();
    let counts: Vec<usize> = [5, 8, 12, 20]
        .iter()
        .map(|&n| partition(&p, n).len())
        .collect();
    assert_eq!(counts, [11, 17, 25, 41]);
}

#[test]
fn strategies_agree_on_two_state_problem() {
    let p = two_state_example::<f64>();
    let d = discretize_zoh(&p, 5).unwrap();
    let mut sets: Vec<Vec<String>> = [Strategy::GridSeeded, Strategy::Combinatorial]
        .iter()
        .map(|&s| {
            let mut v: Vec<String> = enumerate_partition(&d, &PartitionOptions::new(s))
                .unwrap()
                .regions
                .iter()
                .map(|r| r.active.to_string())
                .collect();
            v.sort();
            v
        })
        .collect();
    let b = sets.pop().unwrap();
    assert_eq!(sets.pop().unwrap(), b);
}

#[test]
fn oracle_matches_continuous_cost() {
    let mut rng = common::rng(51);
    for p in [integrator_example::<f64>(), two_state_example()] {
        let mut done = 0;
        while done < 10 {
            let x0 = common::uniform_in_box(&mut rng, &p.theta_box);
            let Ok(traj) = common::solve(&p, &x0) else {
                continue;
            };
            done += 1;
            let oracle = dense_oracle(&p, &DVector::from_column_slice(&x0), 2000).unwrap();
            let rel = (traj.cost - oracle.cost).abs() / traj.cost.abs().max(1e-12);
            assert!(
                rel <= 1e-3,
                "{x0:?}: CT {} vs oracle {} ({rel:.2e})",
                traj.cost,
                oracle.cost
            );
        }
    }
}

#[test]
fn oracle_error_is_first_order_in_step() {
    let p = two_state_example::<f64>();
    let x0 = DVector::from_row_slice(&[0.5642, -1.1118]);
    let j = common::solve(&p, x0.as_slice()).unwrap().cost;
    let errs: Vec<f64> = [1000, 2000, 4000]
        .iter()
        .map(|&n| j - dense_oracle(&p, &x0, n).unwrap().cost)
        .collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 0.05, "{errs:?}");
    }
}

#[test]
fn two_state_switching_time_against_oracle() {
    let p = two_state_example::<f64>();
    let x0 = DVector::from_row_slice(&[0.0, 0.5]);
    let ts = common::solve(&p, x0.as_slice()).unwrap().t_switch[0];
    let oracle = dense_oracle(&p, &x0, 2000).unwrap();
    let times = oracle.switch_times(0);
    assert_eq!(times.len(), 1);
    assert!((times[0] - ts).abs() <= 1e-3, "{} vs {ts}", times[0]);
}
