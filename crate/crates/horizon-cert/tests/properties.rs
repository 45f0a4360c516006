use horizon_cert::bounds::{
    alpha_hat_eq13, alpha_hat_eq16, alpha_hat_eq7, alpha_hat_eq9, alpha_thm1, n_min_eq15,
    n_min_eq17, n_min_eq8,
};
use horizon_cert::estimation::{
    gamma_linear_openloop, iss_storage, log_grid, synthesize_storage_linear, verify_storage,
    StorageMethod,
};
use horizon_cert::linalg::{Mat, Vector};
use horizon_cert::lp::{alpha_lp12, alpha_lp6, solve_lp, LpStatus};
use horizon_cert::models::exact_discretization;
use horizon_cert::sim::{riccati_value, LinearOcp, OcpOptions, TerminalCostSpec};
use horizon_cert::system::{LinearSystem, QuadraticStageCost, StateMeasure};
use horizon_cert::{Constants, Lp, Terminal};
use proptest::prelude::*;

fn same(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && a == b) || (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_matches_closed_forms_for_constant_gamma(
        g in 1.01f64..20.0, eps in 0.05f64..0.95, ef in 0.05f64..10.0, n in 1usize..30,
    ) {
        let w = Constants::storage(vec![g; n], eps);
        let l = Constants::stage_cost(vec![g; n]);
        let t = Terminal::new(0.0, g, ef, vec![g; n]);
        let pairs = [
            (alpha_lp6(&w, n).unwrap().alpha, alpha_hat_eq7(&w, n).unwrap().alpha),
            (alpha_lp6(&l, n).unwrap().alpha, alpha_hat_eq9(&l, n).unwrap().alpha),
            (alpha_lp12(&l, &t, n).unwrap().alpha, alpha_hat_eq13(&t, n).unwrap().alpha),
            (alpha_lp12(&w, &t, n).unwrap().alpha, alpha_hat_eq16(&w, &t, n).unwrap().alpha),
        ];
        for (i, (lp, cf)) in pairs.iter().enumerate() {
            prop_assert!(same(*lp, *cf, 1e-6), "pair {}: {} vs {}", i, lp, cf);
        }
    }

    #[test]
    fn closed_forms_bound_the_program_from_below(
        steps in proptest::collection::vec(0.0f64..2.0, 12),
        g0 in 1.01f64..4.0, eps in 0.05f64..0.95, ef in 0.05f64..10.0, n in 1usize..12,
    ) {
        let mut gamma = vec![g0];
        for s in &steps[1..] {
            gamma.push(gamma.last().unwrap() + s);
        }
        let w = Constants::storage(gamma.clone(), eps);
        let l = Constants::stage_cost(gamma.clone());
        let t = Terminal::new(1.0, 1.0 + ef, ef, gamma);
        let pairs = [
            (alpha_lp6(&w, n).unwrap().alpha, alpha_hat_eq7(&w, n).unwrap().alpha),
            (alpha_lp6(&l, n).unwrap().alpha, alpha_hat_eq9(&l, n).unwrap().alpha),
            (alpha_lp12(&l, &t, n).unwrap().alpha, alpha_hat_eq13(&t, n).unwrap().alpha),
            (alpha_lp12(&w, &t, n).unwrap().alpha, alpha_hat_eq16(&w, &t, n).unwrap().alpha),
        ];
        for (i, (lp, cf)) in pairs.iter().enumerate() {
            prop_assert!(*lp >= *cf - 1e-8 || same(*lp, *cf, 0.0), "pair {}: {} < {}", i, lp, cf);
        }
        if n > 1 {
            prop_assert!(alpha_thm1(&w, n).unwrap().alpha <= alpha_lp6(&w, n).unwrap().alpha + 1e-9);
        }
    }

    #[test]
    fn index_sign_flips_at_the_horizon_bound(
        g in 1.01f64..20.0, eps in 0.05f64..0.95, ef in 0.05f64..10.0,
    ) {
        let len = 4000;
        let w = Constants::storage(vec![g; len], eps);
        let t = Terminal::new(1.0, 1.0 + ef, ef, vec![g; len]);
        let checks: [(Option<usize>, Box<dyn Fn(usize) -> f64>); 3] = [
            (n_min_eq8(g, eps).unwrap().min_horizon(), Box::new(|n| alpha_hat_eq7(&w, n).unwrap().alpha)),
            (n_min_eq15(g, ef).unwrap().min_horizon(), Box::new(|n| alpha_hat_eq13(&t, n).unwrap().alpha)),
            (n_min_eq17(g, eps, ef).unwrap().min_horizon(), Box::new(|n| alpha_hat_eq16(&w, &t, n).unwrap().alpha)),
        ];
        for (i, (h, alpha)) in checks.iter().enumerate() {
            let h = h.unwrap();
            prop_assert!(h < len);
            prop_assert!(alpha(h) > 0.0, "case {} at {}", i, h);
            if h > 1 {
                prop_assert!(alpha(h - 1) <= 1e-12, "case {} below {}", i, h);
            }
        }
    }

    #[test]
    fn longer_gamma_horizon_only_appends(
        a in proptest::collection::vec(-0.9f64..0.9, 4), q in 0.0f64..2.0, k in 1usize..20,
    ) {
        let sys = LinearSystem::unconstrained(Mat::from_row_slice(2, 2, &a), Mat::from_row_slice(2, 1, &[0.0, 1.0]), Mat::identity(2, 2)).unwrap();
        let cost = QuadraticStageCost::at_origin(Mat::identity(2, 2), Mat::identity(2, 2), q, 1.0, 1).unwrap();
        let m = StateMeasure::QuadraticForm(Mat::identity(2, 2));
        let short = gamma_linear_openloop(&sys, &cost, &m, None, k).unwrap();
        let long = gamma_linear_openloop(&sys, &cost, &m, None, k + 1).unwrap();
        prop_assert_eq!(&long[..k], &short[..]);
        prop_assert!(long.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        // Zero input is one admissible sequence, so V_k ≤ γ_k σ along random states.
        let v = riccati_value(&sys, &cost, None, k).unwrap();
        for x in [Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![0.3, -0.7])] {
            prop_assert!(x.dot(&(&v * &x)) <= short[k - 1] * x.norm_squared() + 1e-8);
        }
    }

    #[test]
    fn value_grows_with_horizon_and_beats_shifted_candidate(
        a in proptest::collection::vec(-1.2f64..1.2, 4), x in proptest::collection::vec(-2.0f64..2.0, 2), n in 2usize..8,
    ) {
        let mut sys = LinearSystem::unconstrained(Mat::from_row_slice(2, 2, &a), Mat::from_row_slice(2, 1, &[0.2, 1.0]), Mat::identity(2, 2)).unwrap();
        sys.u_min = Vector::from_element(1, -0.5);
        sys.u_max = Vector::from_element(1, 0.5);
        let cost = QuadraticStageCost::at_origin(Mat::identity(2, 2), Mat::identity(2, 2), 0.1, 0.5, 1).unwrap();
        let x0 = Vector::from_vec(x);
        let opts = OcpOptions::default();
        let short = LinearOcp::new(&sys, &cost, &TerminalCostSpec::None, n).unwrap().solve(&x0, None, &opts).unwrap();
        let long = LinearOcp::new(&sys, &cost, &TerminalCostSpec::None, n + 1).unwrap();
        let sol = long.solve(&x0, None, &opts).unwrap();
        prop_assert!(sol.value >= short.value - 1e-7 * (1.0 + short.value));
        let mut cand = short.inputs.clone();
        cand.push(Vector::zeros(1));
        prop_assert!(sol.value <= long.objective(&x0, &cand) + 1e-7 * (1.0 + sol.value));
    }

    #[test]
    fn discretization_is_a_semigroup(
        a in proptest::collection::vec(-2.0f64..2.0, 9), h1 in 0.01f64..1.0, h2 in 0.01f64..1.0,
    ) {
        let ac = Mat::from_row_slice(3, 3, &a);
        let bc = Mat::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let (a1, _) = exact_discretization(&ac, &bc, h1).unwrap();
        let (a2, _) = exact_discretization(&ac, &bc, h2).unwrap();
        let (a12, _) = exact_discretization(&ac, &bc, h1 + h2).unwrap();
        prop_assert!((&a1 * &a2 - &a12).norm() <= 1e-10 * (1.0 + a12.norm()));
    }

    #[test]
    fn simplex_matches_vertex_enumeration(
        rows in 1usize..6, vars in 1usize..5,
        data in proptest::collection::vec(-3.0f64..3.0, 40),
        rhs in proptest::collection::vec(0.5f64..4.0, 6),
    ) {
        let mut lp = Lp::new((0..vars).map(|j| format!("x{j}")).collect());
        lp.objective = data[..vars].to_vec();
        for i in 0..rows {
            lp.add_le(data[vars + i * vars..vars + (i + 1) * vars].to_vec(), rhs[i]);
        }
        let sol = solve_lp(&lp, None).unwrap();
        match vertex_optimum(&lp) {
            Some(best) if sol.status == LpStatus::Optimal => prop_assert!((sol.objective - best).abs() <= 1e-8 * (1.0 + best.abs())),
            _ => prop_assert_eq!(sol.status, LpStatus::Unbounded),
        }
    }
}

/// Best vertex of {x ≥ 0, A x ≤ b} when the objective is bounded below on
/// it, found by solving every square subsystem of active constraints.
/// Boundedness is decided by checking the extreme rays of the recession
/// cone {d ≥ 0, A d ≤ 0} the same way on the normalized cone.
fn vertex_optimum(lp: &Lp) -> Option<f64> {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .a_ub
        .iter()
        .cloned()
        .zip(lp.b_ub.iter().copied())
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        rows.push((e, 0.0));
    }
    let best = best_vertex(&rows, &lp.objective)?;
    let mut cone: Vec<(Vec<f64>, f64)> = rows.iter().map(|(r, _)| (r.clone(), 0.0)).collect();
    cone.push((vec![1.0; n], 1.0));
    cone.push((vec![-1.0; n], -1.0));
    match best_vertex(&cone, &lp.objective) {
        Some(v) if v < -1e-9 => None,
        _ => Some(best),
    }
}

fn best_vertex(rows: &[(Vec<f64>, f64)], c: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn recurse(
        rows: &[(Vec<f64>, f64)],
        c: &[f64],
        start: usize,
        depth: usize,
        pick: &mut Vec<usize>,
        best: &mut Option<f64>,
    ) {
        let n = c.len();
        if depth == n {
            let a = Mat::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
            let b = Vector::from_fn(n, |i, _| rows[pick[i]].1);
            let Some(x) = a.lu().solve(&b) else { return };
            if !x.iter().all(|v| v.is_finite()) {
                return;
            }
            let feasible = rows.iter().all(|(r, rb)| {
                r.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>()
                    <= rb + 1e-9 * (1.0 + rb.abs())
            });
            if feasible {
                let val: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                *best = Some(best.map_or(val, |b: f64| b.min(val)));
            }
            return;
        }
        for i in start..rows.len() {
            pick[depth] = i;
            recurse(rows, c, i + 1, depth + 1, pick, best);
        }
    }
    recurse(rows, c, 0, 0, &mut pick, &mut best);
    best
}

#[test]
fn synthesized_storage_verifies_and_corruption_is_caught() {
    let sys = LinearSystem::new(
        Mat::from_row_slice(2, 2, &[1.05, 0.2, 0.0, 0.8]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        Vector::from_element(1, -1.0),
        Vector::from_element(1, 1.0),
    )
    .unwrap();
    let cost =
        QuadraticStageCost::at_origin(sys.c.clone(), Mat::identity(1, 1), 0.0, 1.0, 1).unwrap();
    let syn = synthesize_storage_linear(
        &sys,
        &cost,
        &log_grid(0.05, 0.9, 6),
        60,
        StorageMethod::Maximal,
    )
    .unwrap();
    let sigma = StateMeasure::QuadraticForm(syn.p.clone());
    let ok = verify_storage(&sys, &cost, &syn.storage, &sigma, (1.0, 1.0), 2000, 3.0, 11).unwrap();
    assert!(ok.passed, "{ok:?}");
    let bad = syn.storage.scaled(10.0);
    let v = verify_storage(&sys, &cost, &bad, &sigma, (1.0, 1.0), 2000, 3.0, 11).unwrap();
    assert!(!v.passed && v.max_dissipation > 0.0, "{v:?}");
}

#[test]
fn input_to_state_storage_dissipates() {
    let sys = LinearSystem::unconstrained(
        Mat::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.5]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        Mat::identity(2, 2),
    )
    .unwrap();
    let cost =
        QuadraticStageCost::at_origin(Mat::zeros(1, 2), Mat::identity(1, 1), 0.0, 1.0, 1).unwrap();
    let (w, measure) = iss_storage(&sys, 0.5).unwrap();
    let sigma = StateMeasure::QuadraticForm(measure.form());
    let v = verify_storage(&sys, &cost, &w, &sigma, (1.0, 1.0), 2000, 3.0, 5).unwrap();
    assert!(v.passed, "{v:?}");
}
