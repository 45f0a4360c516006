use horizon_cert::estimation::{
    gamma_nonlinear_grid, narx_dissipation, narx_storage, GridMeasure, GridSpec,
};
use horizon_cert::linalg::{Mat, Vector};
use horizon_cert::models::{FourTank, FourTankParams};
use horizon_cert::sim::{closed_loop, ClosedLoopOptions, TerminalCostSpec};
use horizon_cert::system::{Model, QuadraticStageCost, StateMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plant() -> FourTank {
    FourTank::new(FourTankParams::default()).unwrap()
}

fn cost(t: &FourTank, q: f64) -> QuadraticStageCost {
    QuadraticStageCost::new(
        FourTank::output_matrix(),
        Mat::identity(2, 2),
        q,
        Mat::identity(2, 2) * 1e-2,
        t.x_s.clone(),
        t.u_s.clone(),
    )
    .unwrap()
}

fn x0(t: &FourTank) -> Vector {
    &t.x_s + Vector::from_vec(vec![3.0, -4.0, -3.0, 4.0])
}

#[test]
fn rk4_local_error_is_fifth_order() {
    let t = plant();
    let x = &t.x_s + Vector::from_vec(vec![2.0, -1.0, 1.5, 3.0]);
    let u = Vector::from_vec(vec![4.0, 6.0]);
    let reference = |h: f64| {
        let mut z = x.clone();
        for _ in 0..2000 {
            z = t.rk4_step(&z, &u, h / 2000.0).0;
        }
        z
    };
    let e1 = (t.rk4_step(&x, &u, 3.0).0 - reference(3.0)).norm();
    let e2 = (t.rk4_step(&x, &u, 1.5).0 - reference(1.5)).norm();
    let ratio = e1 / e2;
    assert!((ratio - 32.0).abs() < 4.0, "{ratio}");
}

#[test]
fn narx_storage_telescopes_along_random_trajectories() {
    let t = plant();
    let c = cost(&t, 0.0);
    let w = narx_storage(2, Mat::identity(2, 2), Mat::identity(2, 2) * 1e-2).unwrap();
    assert_eq!(w.eps_o, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let start = &t.x_s + Vector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let inputs: Vec<Vector> = (0..40)
            .map(|_| Vector::from_fn(2, |_, _| rng.random_range(0.0..10.0)))
            .collect();
        let d = narx_dissipation(&t, &c, &w, &start, &inputs).unwrap();
        assert!(d.residual.iter().all(|r| *r <= 1e-10));
        assert!(d.telescoping.iter().all(|r| r.abs() <= 1e-12));
    }
}

#[test]
fn grid_constants_are_monotone() {
    let t = plant();
    let c = cost(&t, 0.1);
    let grid = GridSpec::uniform(4, 5.0, 5);
    let est = gamma_nonlinear_grid(
        &t,
        &c,
        &GridMeasure::State(StateMeasure::StageCostMin),
        &grid,
        100,
        None,
    )
    .unwrap();
    assert!(est.gamma.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(est.evaluated + est.skipped, 625);
    let narx = GridMeasure::Narx {
        nu: 2,
        q: Mat::identity(2, 2),
        r: Mat::identity(2, 2) * 1e-2,
    };
    let est = gamma_nonlinear_grid(&t, &cost(&t, 0.0), &narx, &grid, 100, Some(1e3)).unwrap();
    assert!(est.gamma.iter().all(|g| g.is_finite()));
}

#[test]
fn terminal_weighting_stabilizes_while_plain_horizon_drifts() {
    let t = plant();
    let opts = ClosedLoopOptions {
        steps: 100,
        ..Default::default()
    };
    let plain = closed_loop(
        &t,
        &cost(&t, 0.0),
        &TerminalCostSpec::None,
        14,
        &x0(&t),
        &opts,
    )
    .unwrap();
    let weighted = TerminalCostSpec::ScaledMeasure {
        omega: 1e3,
        measure: StateMeasure::StageCostMin,
    };
    let tuned = closed_loop(&t, &cost(&t, 0.1), &weighted, 10, &x0(&t), &opts).unwrap();
    let dev = |x: &Vector| (x - &t.x_s).norm();
    assert!(
        dev(tuned.final_state()) < 1e-3,
        "{}",
        dev(tuned.final_state())
    );
    assert!(
        dev(plain.final_state()) > 1.0,
        "{}",
        dev(plain.final_state())
    );
    assert!(t.input_admissible(&plain.inputs[0]));
    let storage_weighted = TerminalCostSpec::StageWeighting { omega: 1e3, nu: 2 };
    let narx = closed_loop(&t, &cost(&t, 0.05), &storage_weighted, 23, &x0(&t), &opts).unwrap();
    assert!(
        dev(narx.final_state()) < 1e-2,
        "{}",
        dev(narx.final_state())
    );
}
