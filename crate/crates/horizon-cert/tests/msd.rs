use horizon_cert::bounds::{n_min_eq15, n_min_thm1};
use horizon_cert::estimation::{
    gamma_linear_openloop, log_grid, synthesize_storage_linear, StorageMethod,
};
use horizon_cert::linalg::{spectral_radius, Mat, Vector};
use horizon_cert::models::msd_chain_model;
use horizon_cert::sim::{
    closed_loop, detect_limit_cycle, finite_horizon_lqr, ClosedLoopOptions, LimitCycleOptions,
    TerminalCostSpec,
};
use horizon_cert::system::{LinearSystem, QuadraticStageCost, StateMeasure};

fn chain() -> LinearSystem {
    msd_chain_model(6, 1.0, 10.0, 2.0, 1.0).unwrap()
}

fn cost(sys: &LinearSystem, q: f64, r: f64) -> QuadraticStageCost {
    QuadraticStageCost::at_origin(sys.c.clone(), Mat::identity(1, 1), q, r, 1).unwrap()
}

#[test]
fn open_loop_spectral_radius() {
    let rho = spectral_radius(&chain().a).unwrap();
    assert!((rho - 0.943).abs() < 0.005, "{rho}");
}

#[test]
fn finite_horizon_lqr_stability_pattern() {
    let sys = chain();
    let c = cost(&sys, 1e-4, 1e-5);
    let rho: Vec<f64> = (1..=5)
        .map(|n| finite_horizon_lqr(&sys, &c, None, n).unwrap().1)
        .collect();
    assert!(
        rho[1] > 1.0 && rho[2] < 1.0 && rho[3] > 1.0 && rho[4] > 1.0,
        "{rho:?}"
    );
}

#[test]
fn stage_cost_path_horizon_at_large_q() {
    let sys = chain();
    let c = cost(&sys, 10.0, 1e-5);
    let g = gamma_linear_openloop(&sys, &c, &StateMeasure::StageCostMin, None, 400).unwrap();
    let gbar = g.iter().copied().fold(0.0, f64::max);
    let n = n_min_eq15(gbar, f64::INFINITY).unwrap().n_min;
    assert!((25.0..=40.0).contains(&n), "{n}");
}

#[test]
fn storage_path_with_large_input_weight() {
    let sys = chain();
    let c = cost(&sys, 1e-4, 13.0);
    let syn = synthesize_storage_linear(
        &sys,
        &c,
        &log_grid(1e-3, 1.0 - 1e-4, 4),
        400,
        StorageMethod::Maximal,
    )
    .unwrap();
    assert!(syn.horizon.n_min <= 2.0, "{:?}", syn.candidates);
    let thm1 = n_min_thm1(&syn.constants).unwrap();
    let (h1, h3) = (
        thm1.min_horizon().unwrap(),
        syn.horizon.min_horizon().unwrap(),
    );
    assert!(h1 >= 5 * h3, "{h1} vs {h3}");
}

#[test]
fn short_horizon_without_terminal_cost_cycles() {
    let sys = chain();
    let c = cost(&sys, 1e-4, 1e-5);
    let x0 = Vector::from_fn(12, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
    let opts = ClosedLoopOptions {
        steps: 600,
        ..Default::default()
    };
    let trace = closed_loop(&sys, &c, &TerminalCostSpec::None, 5, &x0, &opts).unwrap();
    let v = detect_limit_cycle(
        &trace,
        &sys,
        &Vector::zeros(12),
        &LimitCycleOptions::default(),
    );
    assert!(v.detected && v.saturation > 0.5, "{v:?}");
}
