//! Riccati recursions and a long-horizon proxy for the infinite-horizon
//! optimal cost.

use serde::{Deserialize, Serialize};

use super::ocp::{solve_shooting, LinearOcp, OcpOptions, TerminalCostSpec};
use crate::error::{domain, Error, Result};
use crate::linalg::{sda_dare, spectral_radius, symmetrize, Mat, Vector};
use crate::system::{LinearSystem, Model, QuadraticStageCost};

/// P⁺ = Q̃ + A'PA − A'PB(R + B'PB)^{-1}B'PA and the gain attached to P.
fn riccati_step(sys: &LinearSystem, q_tilde: &Mat, r: &Mat, p: &Mat) -> Result<(Mat, Mat)> {
    let (a, b) = (&sys.a, &sys.b);
    let inner = r + b.transpose() * p * b;
    let gain = inner
        .cholesky()
        .ok_or_else(|| Error::Singular("R + B'PB".into()))?
        .solve(&(b.transpose() * p * a));
    let next = symmetrize(&(q_tilde + a.transpose() * p * a - a.transpose() * p * b * &gain));
    Ok((next, gain))
}

/// Cost-to-go matrix of the unconstrained N-step problem.
pub fn riccati_value(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    p_f: Option<&Mat>,
    n: usize,
) -> Result<Mat> {
    let q_tilde = cost.state_weight();
    let mut p = p_f.cloned().unwrap_or_else(|| Mat::zeros(sys.n(), sys.n()));
    for _ in 0..n {
        p = riccati_step(sys, &q_tilde, &cost.r, &p)?.0;
    }
    Ok(p)
}

/// Time-0 gain of the unconstrained N-step problem, ignoring the input
/// box, and the spectral radius of A − BK.
pub fn finite_horizon_lqr(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    p_f: Option<&Mat>,
    n: usize,
) -> Result<(Mat, f64)> {
    if n == 0 {
        return domain("horizon must be at least 1");
    }
    let q_tilde = cost.state_weight();
    let p = riccati_value(sys, cost, p_f, n - 1)?;
    let (_, gain) = riccati_step(sys, &q_tilde, &cost.r, &p)?;
    let rho = spectral_radius(&(&sys.a - &sys.b * &gain))?;
    Ok((gain, rho))
}

/// Stationary Riccati solution and gain.
pub fn stationary_lqr(sys: &LinearSystem, cost: &QuadraticStageCost) -> Result<(Mat, Mat)> {
    let r_inv = cost
        .r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("input weight".into()))?;
    let p = sda_dare(
        &sys.a,
        &(&sys.b * r_inv * sys.b.transpose()),
        &cost.state_weight(),
    )?;
    let (_, gain) = riccati_step(sys, &cost.state_weight(), &cost.r, &p)?;
    Ok((p, gain))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VInfEstimate {
    /// V_H, or V_∞ itself when the optimum eventually follows the
    /// unconstrained LQR law inside the box.
    pub value: f64,
    pub half_value: f64,
    /// V_H − V_{H/2}.
    pub increment: f64,
    /// True when `value` is V_∞.
    pub exact: bool,
}

/// Inputs u_s − K dx along the unconstrained LQR trajectory and whether
/// all of them lie in the input box.
fn lqr_rollout(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    gain: &Mat,
    dx0: &Vector,
    steps: usize,
) -> (Vec<Vector>, bool) {
    let mut dx = dx0.clone();
    let mut admissible = true;
    let mut inputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let u = &cost.u_s - gain * &dx;
        admissible &= sys.input_admissible(&u);
        dx = &sys.a * &dx + &sys.b * (&u - &cost.u_s);
        inputs.push(u);
    }
    (inputs, admissible)
}

/// Box-constrained prefix with terminal weight P_∞, for the first prefix
/// length whose LQR continuation stays inside the box. Its optimal value
/// is then V_∞(x0); returns it with the prefix inputs followed by the tail.
fn constrained_optimum(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    p_inf: &Mat,
    gain: &Mat,
    x0: &Vector,
    h: usize,
) -> Result<Option<(f64, Vec<Vector>)>> {
    let terminal = TerminalCostSpec::QuadraticForm { p: p_inf.clone() };
    let opts = OcpOptions::default();
    let mut hc = 10;
    while hc < h && hc * sys.m() <= 4 * opts.condense_limit {
        let sol = LinearOcp::new(sys, cost, &terminal, hc)?.solve(x0, None, &opts)?;
        let end = sol.states.last().expect("rollout has x0") - &cost.x_s;
        let (tail, admissible) = lqr_rollout(sys, cost, gain, &end, h - hc);
        if sol.converged && admissible {
            let mut inputs = sol.inputs;
            inputs.extend(tail);
            return Ok(Some((sol.value, inputs)));
        }
        hc *= 2;
    }
    Ok(None)
}

/// Long-horizon proxy for V_∞ at x0.
pub fn v_infty_oracle(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    x0: &Vector,
    h: usize,
    tol: f64,
) -> Result<VInfEstimate> {
    if h < 2 {
        return domain("oracle horizon must be at least 2");
    }
    let dx0 = x0 - &cost.x_s;
    let (p_inf, gain) = stationary_lqr(sys, cost)?;
    let (lqr_inputs, admissible) = lqr_rollout(sys, cost, &gain, &dx0, h);
    if admissible {
        let vh = dx0.dot(&(riccati_value(sys, cost, None, h)? * &dx0));
        let vh2 = dx0.dot(&(riccati_value(sys, cost, None, h / 2)? * &dx0));
        return Ok(VInfEstimate {
            value: dx0.dot(&(&p_inf * &dx0)),
            half_value: vh2,
            increment: vh - vh2,
            exact: true,
        });
    }
    let half = |warm: &[Vector], max_iters| {
        solve_shooting(
            sys,
            cost,
            &TerminalCostSpec::None,
            h / 2,
            x0,
            Some(&warm[..h / 2]),
            tol,
            max_iters,
        )
    };
    if let Some((value, warm)) = constrained_optimum(sys, cost, &p_inf, &gain, x0, h)? {
        let half = half(&warm, 5_000)?;
        return Ok(VInfEstimate {
            value,
            half_value: half.value,
            increment: value - half.value,
            exact: true,
        });
    }
    let warm: Vec<Vector> = lqr_inputs.iter().map(|u| sys.project_input(u)).collect();
    let full = solve_shooting(
        sys,
        cost,
        &TerminalCostSpec::None,
        h,
        x0,
        Some(&warm),
        tol,
        200_000,
    )?;
    let half = half(&warm, 200_000)?;
    Ok(VInfEstimate {
        value: full.value,
        half_value: half.value,
        increment: full.value - half.value,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn two_step_gain_by_hand() {
        let sys = LinearSystem::unconstrained(s(0.9), s(0.5), s(1.0)).unwrap();
        let cost = QuadraticStageCost::at_origin(s(1.0), s(1.0), 0.0, 0.1, 1).unwrap();
        let (k1, rho1) = finite_horizon_lqr(&sys, &cost, None, 1).unwrap();
        assert_eq!(k1[(0, 0)], 0.0);
        assert!((rho1 - 0.9).abs() < 1e-15);
        // K = (r + b²q)^{-1} b q a with P = Q̃ = 1 after one step
        let (k2, _) = finite_horizon_lqr(&sys, &cost, None, 2).unwrap();
        assert!((k2[(0, 0)] - 0.5 * 0.9 / (0.1 + 0.25)).abs() < 1e-14);
    }

    #[test]
    fn long_horizon_reaches_stationary_gain() {
        let sys = LinearSystem::unconstrained(
            Mat::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.7]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::identity(2, 2),
        )
        .unwrap();
        let cost =
            QuadraticStageCost::at_origin(Mat::identity(2, 2), Mat::identity(2, 2), 0.0, 1.0, 1)
                .unwrap();
        let (k, _) = finite_horizon_lqr(&sys, &cost, None, 400).unwrap();
        let (_, k_inf) = stationary_lqr(&sys, &cost).unwrap();
        assert!((k - k_inf).norm() < 1e-10);
    }

    #[test]
    fn oracle_exact_when_unconstrained() {
        let sys = LinearSystem::unconstrained(s(0.8), s(1.0), s(1.0)).unwrap();
        let cost = QuadraticStageCost::at_origin(s(1.0), s(1.0), 0.0, 1.0, 1).unwrap();
        let x0 = Vector::from_element(1, 1.0);
        let v = v_infty_oracle(&sys, &cost, &x0, 500, 1e-10).unwrap();
        let (p, _) = stationary_lqr(&sys, &cost).unwrap();
        assert!(v.exact && (v.value - p[(0, 0)]).abs() < 1e-12);
        assert!(v.increment.abs() < 1e-6);
        let z = v_infty_oracle(&sys, &cost, &Vector::zeros(1), 10, 1e-10).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn saturated_start_still_gives_the_infinite_horizon_value() {
        let mut sys = LinearSystem::unconstrained(s(0.9), s(1.0), s(1.0)).unwrap();
        sys.u_min = Vector::from_element(1, -0.3);
        sys.u_max = Vector::from_element(1, 0.3);
        let cost = QuadraticStageCost::at_origin(s(1.0), s(1.0), 0.0, 0.1, 1).unwrap();
        let x0 = Vector::from_element(1, 3.0);
        let v = v_infty_oracle(&sys, &cost, &x0, 400, 1e-10).unwrap();
        assert!(v.exact);
        let long = solve_shooting(
            &sys,
            &cost,
            &TerminalCostSpec::None,
            200,
            &x0,
            None,
            1e-7,
            20_000,
        )
        .unwrap();
        assert!(
            (v.value - long.value).abs() < 1e-6 * long.value,
            "{} vs {}",
            v.value,
            long.value
        );
    }
}
