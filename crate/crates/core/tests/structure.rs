mod common;

use std::collections::BTreeSet;

use mpoc::linalg::linspace;
use mpoc::{detect_structure_with, integrator_example, two_state_example, SearchOptions};
use nalgebra::DVector;

#[test]
fn detection_is_idempotent() {
    let mut rng = common::rng(9);
    for p in [integrator_example::<f64>(), two_state_example()] {
        for _ in 0..15 {
            let x0 = DVector::from_vec(common::uniform_in_box(&mut rng, &p.theta_box));
            let Ok((s, traj)) = detect_structure_with(&p, &x0, &SearchOptions::default(), None)
            else {
                continue;
            };
            let (again, traj2) = detect_structure_with(
                &p,
                &x0,
                &SearchOptions::default(),
                Some((&s, &traj.t_switch)),
            )
            .unwrap();
            assert_eq!(s, again);
            for (a, b) in traj.t_switch.iter().zip(&traj2.t_switch) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn integrator_structure_changes_four_times() {
    let p = integrator_example::<f64>();
    let xs = linspace(-1.27, 2.0, 400);
    let structures: Vec<String> = xs
        .iter()
        .map(|&x| common::solve(&p, &[x]).unwrap().structure.to_string())
        .collect();
    let changes: Vec<f64> = (1..xs.len())
        .filter(|&i| structures[i] != structures[i - 1])
        .map(|i| xs[i])
        .collect();
    assert_eq!(changes.len(), 4, "{changes:?}");
    let e = (-2.0f64).exp();
    let step = xs[1] - xs[0];
    for (c, b) in changes
        .iter()
        .zip([-1.0 + e / 2.0, -0.5, 0.5, 1.0 - e / 2.0])
    {
        assert!(*c >= b && *c - b <= step + 1e-12, "{c} vs {b}");
    }
}

#[test]
fn two_state_grid_has_five_classes() {
    let p = two_state_example::<f64>();
    let axis = linspace(-2.0, 2.0, 40);
    let mut classes = BTreeSet::new();
    for &a in &axis {
        for &b in &axis {
            match common::solve(&p, &[a, b]) {
                Ok(t) => {
                    classes.insert(t.structure.label(&p));
                }
                Err(mpoc::Error::Infeasible { .. }) => {}
                Err(e) => panic!("({a}, {b}): {e}"),
            }
        }
    }
    let expected: BTreeSet<String> = [
        "unconstrained",
        "y1 active → unconstrained",
        "y1 active",
        "y2 active → unconstrained",
        "y2 active",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    assert_eq!(classes, expected);
}
