//! Finite-horizon optimal control by single shooting. Linear plants are
//! condensed into a box-constrained QP solved by accelerated projected
//! gradient with restarts; nonlinear plants use Gauss-Newton steps on the
//! same QP structure. Adjoint gradients serve both.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimation::openloop_cost_forms;
use crate::linalg::{sym_eig_max, symmetrize, Mat, Vector};
use crate::system::{LinearSystem, Model, QuadraticStageCost, StateMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TerminalCostSpec {
    None,
    /// V_f = ω σ.
    ScaledMeasure {
        omega: f64,
        measure: StateMeasure,
    },
    /// V_f(x) = Σ_{j<M} ℓ(x_j, u_s) along the open loop under u_s.
    FiniteTail {
        m: usize,
    },
    /// V_f(x) = ‖x − x_s‖²_P.
    QuadraticForm {
        p: Mat,
    },
    /// V_f = ω W with the input-output storage of lag ν evaluated on the
    /// predicted trajectory, which raises the weight of the last ν stage
    /// costs by ω(ν+1−j)/ν for the j-th stage from the end.
    StageWeighting {
        omega: f64,
        nu: usize,
    },
}

impl TerminalCostSpec {
    pub fn validate(&self, cost: &QuadraticStageCost) -> Result<()> {
        match self {
            TerminalCostSpec::ScaledMeasure { omega, measure } => {
                if !(*omega > 0.0) {
                    return domain("terminal weight must be positive");
                }
                measure.validate(cost)
            }
            TerminalCostSpec::FiniteTail { m } if *m == 0 => {
                domain("tail length must be at least 1")
            }
            TerminalCostSpec::StageWeighting { omega, nu } => {
                if !(*omega > 0.0) {
                    return domain("terminal weight must be positive");
                }
                if *nu == 0 {
                    return domain("storage lag must be at least 1");
                }
                Ok(())
            }
            TerminalCostSpec::QuadraticForm { p }
                if p.shape() != (cost.state_dim(), cost.state_dim()) =>
            {
                Err(Error::Dimension(
                    "terminal matrix does not match the state".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Multipliers of the N stage costs; all ones unless the terminal cost
    /// reweights the end of the horizon.
    pub fn stage_weights(&self, horizon: usize) -> Vec<f64> {
        let mut w = vec![1.0; horizon];
        if let TerminalCostSpec::StageWeighting { omega, nu } = self {
            for j in 1..=(*nu).min(horizon) {
                w[horizon - j] += omega * (nu + 1 - j) as f64 / *nu as f64;
            }
        }
        w
    }

    /// P_f of a linear plant, zero for stage reweighting.
    pub fn matrix(&self, sys: &LinearSystem, cost: &QuadraticStageCost) -> Mat {
        let n = sys.n();
        match self {
            TerminalCostSpec::None | TerminalCostSpec::StageWeighting { .. } => Mat::zeros(n, n),
            TerminalCostSpec::ScaledMeasure { omega, measure } => measure.matrix(cost) * *omega,
            TerminalCostSpec::FiniteTail { m } => {
                openloop_cost_forms(&sys.a, &cost.state_weight(), *m)
                    .pop()
                    .unwrap_or_else(|| Mat::zeros(n, n))
            }
            TerminalCostSpec::QuadraticForm { p } => p.clone(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TerminalCostSpec::None => "none",
            TerminalCostSpec::ScaledMeasure { .. } => "scaled",
            TerminalCostSpec::FiniteTail { .. } => "finite_tail",
            TerminalCostSpec::QuadraticForm { .. } => "quadratic",
            TerminalCostSpec::StageWeighting { .. } => "stage_weighting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpOptions {
    pub tol_linear: f64,
    pub tol_nonlinear: f64,
    pub max_iters_linear: usize,
    /// Condensed QP up to this many decision variables.
    pub condense_limit: usize,
    /// Outer iterations of the Gauss-Newton solver for nonlinear plants.
    pub max_iters_gauss_newton: usize,
}

impl Default for OcpOptions {
    fn default() -> Self {
        Self {
            tol_linear: 1e-8,
            tol_nonlinear: 1e-6,
            max_iters_linear: 20_000,
            condense_limit: 200,
            max_iters_gauss_newton: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub inputs: Vec<Vector>,
    /// x(0..=N).
    pub states: Vec<Vector>,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn stack(us: &[Vector]) -> Vector {
    let m = us.first().map_or(0, |u| u.len());
    Vector::from_iterator(us.len() * m, us.iter().flat_map(|u| u.iter().copied()))
}

fn unstack(v: &Vector, m: usize) -> Vec<Vector> {
    (0..v.len() / m)
        .map(|k| v.rows(k * m, m).into_owned())
        .collect()
}

fn project(v: &Vector, lo: &Vector, hi: &Vector) -> Vector {
    v.zip_zip_map(lo, hi, |x, l, h| x.clamp(l, h))
}

fn repeat(v: &Vector, n: usize) -> Vector {
    Vector::from_iterator(v.len() * n, (0..n).flat_map(|_| v.iter().copied()))
}

/// Result of the box-constrained minimization of u'Hu + 2g'u.
#[derive(Debug, Clone)]
pub struct BoxQpResult {
    pub x: Vector,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn qp_residual(
    h: &Mat,
    g: &Vector,
    x: &Vector,
    lo: &Vector,
    hi: &Vector,
    lip: f64,
    scale: f64,
) -> f64 {
    let grad = (h * x + g) * 2.0;
    let step = project(&(x - &grad / lip), lo, hi);
    (x - step).amax() * lip / scale
}

/// Newton step on the free variables of the current active set.
fn polish(h: &Mat, g: &Vector, x: &Vector, lo: &Vector, hi: &Vector) -> Option<Vector> {
    let n = x.len();
    let grad = h * x + g;
    let tol = 1e-12 * (1.0 + x.amax());
    let free: Vec<usize> = (0..n)
        .filter(|&i| {
            !((x[i] <= lo[i] + tol && grad[i] >= 0.0) || (x[i] >= hi[i] - tol && grad[i] <= 0.0))
        })
        .collect();
    let mut y = x.clone();
    if free.is_empty() {
        return Some(y);
    }
    let hff = Mat::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let rhs = Vector::from_fn(free.len(), |a, _| {
        let i = free[a];
        let mut s = g[i];
        for j in 0..n {
            if !free.contains(&j) {
                s += h[(i, j)] * x[j];
            }
        }
        -s
    });
    let z = hff.cholesky()?.solve(&rhs);
    for (a, &i) in free.iter().enumerate() {
        y[i] = z[a];
    }
    Some(project(&y, lo, hi))
}

/// Minimizes u'Hu + 2g'u over lo ≤ u ≤ hi by FISTA with function restart,
/// polishing on the identified active set along the way.
#[allow(clippy::too_many_arguments)]
pub fn solve_box_qp(
    h: &Mat,
    g: &Vector,
    lo: &Vector,
    hi: &Vector,
    x0: &Vector,
    lip: f64,
    tol: f64,
    max_iters: usize,
) -> BoxQpResult {
    let f = |x: &Vector| x.dot(&(h * x)) + 2.0 * g.dot(x);
    let lip = 2.0 * lip.max(f64::MIN_POSITIVE);
    let scale = 1.0 + 2.0 * g.amax();
    let mut x = project(x0, lo, hi);
    let mut fx = f(&x);
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut iters = 0;
    loop {
        if iters % 20 == 0 {
            if let Some(p) = polish(h, g, &x, lo, hi) {
                let fp = f(&p);
                if fp <= fx {
                    x = p;
                    fx = fp;
                    y = x.clone();
                    t = 1.0;
                }
            }
            let res = qp_residual(h, g, &x, lo, hi, lip, scale);
            if res <= tol {
                return BoxQpResult {
                    x,
                    iterations: iters,
                    residual: res,
                    converged: true,
                };
            }
            if iters >= max_iters {
                return BoxQpResult {
                    x,
                    iterations: iters,
                    residual: res,
                    converged: false,
                };
            }
        }
        iters += 1;
        let grad = (h * &y + g) * 2.0;
        let z = project(&(&y - grad / lip), lo, hi);
        let fz = f(&z);
        if fz > fx {
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z + (&z - &x) * ((t - 1.0) / t_next);
        x = z;
        fx = fz;
        t = t_next;
    }
}

/// Condensed form of the linear OCP in deviation coordinates:
/// J(du) = du'H du + 2 du'F dx0 + dx0'E dx0.
#[derive(Debug, Clone)]
pub struct LinearOcp {
    sys: LinearSystem,
    cost: QuadraticStageCost,
    horizon: usize,
    h: Mat,
    f: Mat,
    e: Mat,
    lo: Vector,
    hi: Vector,
    lip: f64,
}

impl LinearOcp {
    pub fn new(
        sys: &LinearSystem,
        cost: &QuadraticStageCost,
        terminal: &TerminalCostSpec,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return domain("horizon must be at least 1");
        }
        terminal.validate(cost)?;
        let drift = &sys.a * &cost.x_s + &sys.b * &cost.u_s - &cost.x_s;
        if drift.amax() > 1e-9 * (1.0 + cost.x_s.amax()) {
            return domain("setpoint is not an equilibrium of the linear plant");
        }
        let (n, m, nn) = (sys.n(), sys.m(), horizon);
        let q_tilde = cost.state_weight();
        let p_f = terminal.matrix(sys, cost);
        // Φ stacks A^1..A^N, Γ the input-to-state convolution.
        let mut phi = Mat::zeros(nn * n, n);
        let mut gam = Mat::zeros(nn * n, nn * m);
        let mut ak = Mat::identity(n, n);
        let mut akb = Vec::with_capacity(nn);
        for k in 0..nn {
            akb.push(&ak * &sys.b);
            ak = &sys.a * ak;
            phi.view_mut((k * n, 0), (n, n)).copy_from(&ak);
        }
        for k in 0..nn {
            for j in 0..=k {
                gam.view_mut((k * n, j * m), (n, m)).copy_from(&akb[k - j]);
            }
        }
        let weights = terminal.stage_weights(nn);
        // Block k weighs x_{k+1}; x_0 enters only through E.
        let mut qbar = Mat::zeros(nn * n, nn * n);
        for k in 0..nn {
            let w = if k + 1 == nn {
                p_f.clone()
            } else {
                &q_tilde * weights[k + 1]
            };
            qbar.view_mut((k * n, k * n), (n, n)).copy_from(&w);
        }
        let mut rbar = Mat::zeros(nn * m, nn * m);
        for k in 0..nn {
            rbar.view_mut((k * m, k * m), (m, m))
                .copy_from(&(&cost.r * weights[k]));
        }
        let qg = &qbar * &gam;
        let h = symmetrize(&(gam.transpose() * &qg + rbar));
        let f = gam.transpose() * &qbar * &phi;
        let e = symmetrize(&(&q_tilde * weights[0] + phi.transpose() * &qbar * &phi));
        let lo = repeat(&(&sys.u_min - &cost.u_s), nn);
        let hi = repeat(&(&sys.u_max - &cost.u_s), nn);
        let lip = sym_eig_max(&h)?;
        Ok(Self {
            sys: sys.clone(),
            cost: cost.clone(),
            horizon,
            h,
            f,
            e,
            lo,
            hi,
            lip,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn objective(&self, x0: &Vector, inputs: &[Vector]) -> f64 {
        let dx = x0 - &self.cost.x_s;
        let du = stack(inputs) - repeat(&self.cost.u_s, self.horizon);
        du.dot(&(&self.h * &du)) + 2.0 * du.dot(&(&self.f * &dx)) + dx.dot(&(&self.e * &dx))
    }

    pub fn solve(
        &self,
        x0: &Vector,
        warm: Option<&[Vector]>,
        opts: &OcpOptions,
    ) -> Result<OcpSolution> {
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state".into()));
        }
        let m = self.sys.m();
        let dx = x0 - &self.cost.x_s;
        let g = &self.f * &dx;
        let us = repeat(&self.cost.u_s, self.horizon);
        let start = match warm {
            Some(w) => stack(w) - &us,
            None => Vector::zeros(self.horizon * m),
        };
        let res = solve_box_qp(
            &self.h,
            &g,
            &self.lo,
            &self.hi,
            &start,
            self.lip,
            opts.tol_linear,
            opts.max_iters_linear,
        );
        let inputs = unstack(&(res.x.clone() + us), m);
        let value =
            (res.x.dot(&(&self.h * &res.x)) + 2.0 * res.x.dot(&g) + dx.dot(&(&self.e * &dx)))
                .max(0.0);
        let states = rollout_states(&self.sys, x0, &inputs);
        Ok(OcpSolution {
            inputs,
            states,
            value,
            iterations: res.iterations,
            residual: res.residual,
            converged: res.converged,
        })
    }
}

fn rollout_states(model: &dyn Model, x0: &Vector, inputs: &[Vector]) -> Vec<Vector> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for u in inputs {
        let next = model.step(states.last().unwrap(), u);
        states.push(next);
    }
    states
}

/// Cost of an input sequence and, when requested, its gradient.
pub fn shooting_cost(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    terminal: &TerminalCostSpec,
    x0: &Vector,
    inputs: &[Vector],
    with_gradient: bool,
) -> (f64, Option<Vec<Vector>>) {
    let q_tilde = cost.state_weight();
    let weights = terminal.stage_weights(inputs.len());
    let mut xs = Vec::with_capacity(inputs.len() + 1);
    let mut jac = Vec::with_capacity(inputs.len());
    let mut x = x0.clone();
    let mut j = 0.0;
    for (u, w) in inputs.iter().zip(&weights) {
        j += w * cost.eval(&x, u);
        xs.push(x.clone());
        if with_gradient {
            let (next, ax, bu) = model.step_with_jacobians(&x, u);
            jac.push((ax, bu));
            x = next;
        } else {
            x = model.step(&x, u);
        }
    }
    // terminal value and its gradient at x_N
    let (vf, mut lam) = match terminal {
        TerminalCostSpec::None | TerminalCostSpec::StageWeighting { .. } => {
            (0.0, Vector::zeros(x.len()))
        }
        TerminalCostSpec::ScaledMeasure { omega, measure } => {
            let p = measure.matrix(cost) * *omega;
            let d = &x - &cost.x_s;
            (d.dot(&(&p * &d)), &p * d * 2.0)
        }
        TerminalCostSpec::QuadraticForm { p } => {
            let d = &x - &cost.x_s;
            (d.dot(&(p * &d)), p * d * 2.0)
        }
        TerminalCostSpec::FiniteTail { m } => {
            let mut tail_x = Vec::with_capacity(*m);
            let mut tail_a = Vec::with_capacity(*m);
            let mut z = x.clone();
            let mut v = 0.0;
            for _ in 0..*m {
                v += cost.state_part(&z);
                tail_x.push(z.clone());
                if with_gradient {
                    let (next, ax, _) = model.step_with_jacobians(&z, &cost.u_s);
                    tail_a.push(ax);
                    z = next;
                } else {
                    z = model.step(&z, &cost.u_s);
                }
            }
            let mut lam = Vector::zeros(x.len());
            if with_gradient {
                for k in (0..*m).rev() {
                    lam = &q_tilde * (&tail_x[k] - &cost.x_s) * 2.0 + tail_a[k].transpose() * lam;
                }
            }
            (v, lam)
        }
    };
    j += vf;
    if !with_gradient {
        return (j, None);
    }
    let mut grad = vec![Vector::zeros(0); inputs.len()];
    for k in (0..inputs.len()).rev() {
        let (ax, bu) = &jac[k];
        let w = 2.0 * weights[k];
        grad[k] = &cost.r * (&inputs[k] - &cost.u_s) * w + bu.transpose() * &lam;
        lam = &q_tilde * (&xs[k] - &cost.x_s) * w + ax.transpose() * lam;
    }
    (j, Some(grad))
}

/// Projected FISTA with backtracking and function restart on the shooting
/// cost. Works for any plant; the step adapts to the local curvature.
pub fn solve_shooting(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    terminal: &TerminalCostSpec,
    horizon: usize,
    x0: &Vector,
    warm: Option<&[Vector]>,
    tol: f64,
    max_iters: usize,
) -> Result<OcpSolution> {
    if horizon == 0 {
        return domain("horizon must be at least 1");
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    terminal.validate(cost)?;
    let m = model.input_dim();
    let lo = repeat(model.input_lower(), horizon);
    let hi = repeat(model.input_upper(), horizon);
    let start = match warm {
        Some(w) if w.len() == horizon => stack(w),
        _ => repeat(&cost.u_s, horizon),
    };
    let eval = |v: &Vector, grad: bool| -> (f64, Option<Vector>) {
        let (j, g) = shooting_cost(model, cost, terminal, x0, &unstack(v, m), grad);
        (j, g.map(|g| stack(&g)))
    };
    let mut x = project(&start, &lo, &hi);
    let (mut fx, _) = eval(&x, false);
    if !fx.is_finite() {
        return Err(Error::NonFinite("objective at the initial guess".into()));
    }
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut lip: f64 = 1.0;
    let mut iters = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iters < max_iters {
        iters += 1;
        let (fy, gy) = eval(&y, true);
        let gy = gy.expect("gradient requested");
        let (z, fz) = loop {
            let z = project(&(&y - &gy / lip), &lo, &hi);
            let d = &z - &y;
            let (fz, _) = eval(&z, false);
            if fz.is_finite()
                && fz <= fy + gy.dot(&d) + 0.5 * lip * d.norm_squared() + 1e-15 * fy.abs()
            {
                break (z, fz);
            }
            lip *= 2.0;
            if lip > 1e20 {
                return Err(Error::NonFinite("step size collapsed".into()));
            }
        };
        residual = (&z - &y).amax() * lip / (1.0 + fy.abs());
        if fz > fx {
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z + (&z - &x) * ((t - 1.0) / t_next);
        x = z;
        fx = fz;
        t = t_next;
        lip *= 0.9;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let inputs = unstack(&x, m);
    let states = rollout_states(model, x0, &inputs);
    Ok(OcpSolution {
        inputs,
        states,
        value: fx.max(0.0),
        iterations: iters,
        residual,
        converged,
    })
}

/// Curvature and gradient of the terminal cost at x_N; for the finite
/// tail the curvature drops second derivatives of the dynamics.
fn terminal_model(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    terminal: &TerminalCostSpec,
    x: &Vector,
) -> (Mat, Vector) {
    let n = x.len();
    let d = x - &cost.x_s;
    match terminal {
        TerminalCostSpec::None | TerminalCostSpec::StageWeighting { .. } => {
            (Mat::zeros(n, n), Vector::zeros(n))
        }
        TerminalCostSpec::ScaledMeasure { omega, measure } => {
            let p = measure.matrix(cost) * *omega;
            let g = &p * &d;
            (p, g)
        }
        TerminalCostSpec::QuadraticForm { p } => (p.clone(), p * &d),
        TerminalCostSpec::FiniteTail { m } => {
            let q_tilde = cost.state_weight();
            let mut sens = Mat::identity(n, n);
            let mut z = x.clone();
            let mut hess = Mat::zeros(n, n);
            let mut grad = Vector::zeros(n);
            for _ in 0..*m {
                let qs = &q_tilde * &sens;
                hess += sens.transpose() * &qs;
                grad += sens.transpose() * (&q_tilde * (&z - &cost.x_s));
                let (next, ax, _) = model.step_with_jacobians(&z, &cost.u_s);
                sens = ax * sens;
                z = next;
            }
            (hess, grad)
        }
    }
}

/// Gauss-Newton sequential QP: linearize the dynamics along the current
/// trajectory, solve the condensed box QP for the step, backtrack on the
/// true cost. Convergence is measured by the projected gradient.
pub fn solve_gauss_newton(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    terminal: &TerminalCostSpec,
    horizon: usize,
    x0: &Vector,
    warm: Option<&[Vector]>,
    opts: &OcpOptions,
) -> Result<OcpSolution> {
    if horizon == 0 {
        return domain("horizon must be at least 1");
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    terminal.validate(cost)?;
    let (n, m, nn) = (model.state_dim(), model.input_dim(), horizon);
    let q_tilde = cost.state_weight();
    let weights = terminal.stage_weights(nn);
    let lo = repeat(model.input_lower(), nn);
    let hi = repeat(model.input_upper(), nn);
    let us = repeat(&cost.u_s, nn);
    let mut u = match warm {
        Some(w) if w.len() == nn => project(&stack(w), &lo, &hi),
        _ => project(&us, &lo, &hi),
    };
    let eval = |v: &Vector, grad: bool| {
        let (j, g) = shooting_cost(model, cost, terminal, x0, &unstack(v, m), grad);
        (j, g.map(|g| stack(&g)))
    };
    let residual_at = |v: &Vector| -> (f64, f64) {
        let (f, g) = eval(v, true);
        let g = g.expect("gradient requested");
        let step = project(&(v - &g), &lo, &hi);
        (f, (v - step).amax() / (1.0 + f.abs()))
    };
    let (mut f, mut residual) = residual_at(&u);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at the initial guess".into()));
    }
    let mut iters = 0;
    while residual > opts.tol_nonlinear && iters < opts.max_iters_gauss_newton {
        iters += 1;
        // Rollout with Jacobians; sens[k] = ∂x_{k+1}/∂u_j stacked over j ≤ k.
        let inputs = unstack(&u, m);
        let mut xs = Vec::with_capacity(nn + 1);
        let mut jac = Vec::with_capacity(nn);
        xs.push(x0.clone());
        for uk in &inputs {
            let (next, ax, bu) = model.step_with_jacobians(xs.last().unwrap(), uk);
            jac.push((ax, bu));
            xs.push(next);
        }
        let mut s_mat = Mat::zeros(nn * n, nn * m);
        for k in 0..nn {
            let (ax, bu) = &jac[k];
            if k > 0 {
                let prev = s_mat.view(((k - 1) * n, 0), (n, k * m)).into_owned();
                s_mat
                    .view_mut((k * n, 0), (n, k * m))
                    .copy_from(&(ax * prev));
            }
            s_mat.view_mut((k * n, k * m), (n, m)).copy_from(bu);
        }
        let (p_n, g_n) = terminal_model(model, cost, terminal, &xs[nn]);
        let mut qbar = Mat::zeros(nn * n, nn * n);
        let mut qvec = Vector::zeros(nn * n);
        for k in 0..nn {
            // block k holds x_{k+1}
            let (w, g) = if k + 1 == nn {
                (p_n.clone(), g_n.clone())
            } else {
                let w = &q_tilde * weights[k + 1];
                let g = &w * (&xs[k + 1] - &cost.x_s);
                (w, g)
            };
            qbar.view_mut((k * n, k * n), (n, n)).copy_from(&w);
            qvec.rows_mut(k * n, n).copy_from(&g);
        }
        let mut rbar = Mat::zeros(nn * m, nn * m);
        for k in 0..nn {
            rbar.view_mut((k * m, k * m), (m, m))
                .copy_from(&(&cost.r * weights[k]));
        }
        let h = symmetrize(&(s_mat.transpose() * &qbar * &s_mat + &rbar));
        let g = s_mat.transpose() * qvec + &rbar * (&u - &us);
        let lip = sym_eig_max(&h)?;
        let qp = solve_box_qp(
            &h,
            &g,
            &(&lo - &u),
            &(&hi - &u),
            &Vector::zeros(nn * m),
            lip,
            opts.tol_linear,
            opts.max_iters_linear,
        );
        let d = qp.x;
        let slope = 2.0 * g.dot(&d);
        if !(slope < 0.0) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let cand = &u + &d * t;
            let (fc, _) = eval(&cand, false);
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else { break };
        u = next;
        (f, residual) = residual_at(&u);
    }
    let inputs = unstack(&u, m);
    let states = rollout_states(model, x0, &inputs);
    Ok(OcpSolution {
        inputs,
        states,
        value: f.max(0.0),
        iterations: iters,
        residual,
        converged: residual <= opts.tol_nonlinear,
    })
}

/// Solver bound to one plant, cost, terminal cost and horizon.
pub enum OcpSolver<'a> {
    Condensed(Box<LinearOcp>),
    Shooting {
        model: &'a dyn Model,
        cost: QuadraticStageCost,
        terminal: TerminalCostSpec,
        horizon: usize,
    },
}

impl<'a> OcpSolver<'a> {
    pub fn new(
        model: &'a dyn Model,
        cost: &QuadraticStageCost,
        terminal: &TerminalCostSpec,
        horizon: usize,
        opts: &OcpOptions,
    ) -> Result<Self> {
        terminal.validate(cost)?;
        match model.as_linear() {
            Some(sys) if horizon * sys.m() <= opts.condense_limit => Ok(Self::Condensed(Box::new(
                LinearOcp::new(sys, cost, terminal, horizon)?,
            ))),
            _ => Ok(Self::Shooting {
                model,
                cost: cost.clone(),
                terminal: terminal.clone(),
                horizon,
            }),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Self::Condensed(ocp) => ocp.horizon(),
            Self::Shooting { horizon, .. } => *horizon,
        }
    }

    pub fn is_linear(&self) -> bool {
        match self {
            Self::Condensed(_) => true,
            Self::Shooting { model, .. } => model.as_linear().is_some(),
        }
    }

    pub fn objective(&self, x0: &Vector, inputs: &[Vector]) -> f64 {
        match self {
            Self::Condensed(ocp) => ocp.objective(x0, inputs),
            Self::Shooting {
                model,
                cost,
                terminal,
                ..
            } => shooting_cost(*model, cost, terminal, x0, inputs, false).0,
        }
    }

    pub fn solve(
        &self,
        x0: &Vector,
        warm: Option<&[Vector]>,
        opts: &OcpOptions,
    ) -> Result<OcpSolution> {
        match self {
            Self::Condensed(ocp) => ocp.solve(x0, warm, opts),
            Self::Shooting {
                model,
                cost,
                terminal,
                horizon,
            } => {
                if model.as_linear().is_some() {
                    solve_shooting(
                        *model,
                        cost,
                        terminal,
                        *horizon,
                        x0,
                        warm,
                        opts.tol_linear,
                        opts.max_iters_linear,
                    )
                } else {
                    solve_gauss_newton(*model, cost, terminal, *horizon, x0, warm, opts)
                }
            }
        }
    }
}

/// One-shot solve of the finite-horizon problem.
pub fn solve_ocp(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    terminal: &TerminalCostSpec,
    horizon: usize,
    x0: &Vector,
    warm: Option<&[Vector]>,
    opts: &OcpOptions,
) -> Result<OcpSolution> {
    OcpSolver::new(model, cost, terminal, horizon, opts)?.solve(x0, warm, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_plant(lo: f64, hi: f64) -> (LinearSystem, QuadraticStageCost) {
        let sys = LinearSystem::new(
            s(1.0),
            s(1.0),
            s(1.0),
            Vector::from_element(1, lo),
            Vector::from_element(1, hi),
        )
        .unwrap();
        let cost = QuadraticStageCost::at_origin(s(1.0), s(1.0), 0.0, 1.0, 1).unwrap();
        (sys, cost)
    }

    #[test]
    fn setpoint_is_optimal() {
        let (sys, cost) = scalar_plant(-1.0, 1.0);
        let sol = solve_ocp(
            &sys,
            &cost,
            &TerminalCostSpec::None,
            4,
            &Vector::zeros(1),
            None,
            &OcpOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(sol.inputs.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn saturated_first_input_matches_brute_force() {
        let (sys, cost) = scalar_plant(-1.0, 1.0);
        let x0 = Vector::from_element(1, 5.0);
        let opts = OcpOptions::default();
        let sol = solve_ocp(&sys, &cost, &TerminalCostSpec::None, 2, &x0, None, &opts).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.inputs[0][0], -1.0);
        let ocp = LinearOcp::new(&sys, &cost, &TerminalCostSpec::None, 2).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let u = [
                    Vector::from_element(1, -1.0 + 0.01 * i as f64),
                    Vector::from_element(1, -1.0 + 0.01 * j as f64),
                ];
                best = best.min(ocp.objective(&x0, &u));
            }
        }
        assert!(sol.value <= best + 1e-9);
        let sh = solve_shooting(
            &sys,
            &cost,
            &TerminalCostSpec::None,
            2,
            &x0,
            None,
            1e-10,
            10_000,
        )
        .unwrap();
        assert!((sh.value - sol.value).abs() < 1e-8);
    }

    #[test]
    fn adjoint_gradient_matches_differences() {
        let (sys, cost) = scalar_plant(-10.0, 10.0);
        let x0 = Vector::from_element(1, 2.0);
        let u: Vec<Vector> = [0.3, -0.2, 0.1]
            .iter()
            .map(|&v| Vector::from_element(1, v))
            .collect();
        for term in [
            TerminalCostSpec::FiniteTail { m: 3 },
            TerminalCostSpec::QuadraticForm { p: s(2.0) },
            TerminalCostSpec::StageWeighting { omega: 5.0, nu: 2 },
        ] {
            let (_, g) = shooting_cost(&sys, &cost, &term, &x0, &u, true);
            let g = g.unwrap();
            for k in 0..3 {
                let mut up = u.clone();
                let mut um = u.clone();
                up[k][0] += 1e-6;
                um[k][0] -= 1e-6;
                let fd = (shooting_cost(&sys, &cost, &term, &x0, &up, false).0
                    - shooting_cost(&sys, &cost, &term, &x0, &um, false).0)
                    / 2e-6;
                assert!((fd - g[k][0]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn finite_tail_matrix_is_tail_cost() {
        let sys = LinearSystem::unconstrained(s(0.5), s(1.0), s(1.0)).unwrap();
        let cost = QuadraticStageCost::at_origin(s(1.0), s(1.0), 0.0, 1.0, 1).unwrap();
        let p = TerminalCostSpec::FiniteTail { m: 3 }.matrix(&sys, &cost);
        assert!((p[(0, 0)] - 1.3125).abs() < 1e-15);
    }

    #[test]
    fn stage_weighting_in_both_formulations() {
        let term = TerminalCostSpec::StageWeighting { omega: 1e3, nu: 2 };
        assert_eq!(term.stage_weights(4), vec![1.0, 1.0, 501.0, 1001.0]);
        assert_eq!(term.stage_weights(1), vec![1001.0]);
        let (sys, cost) = scalar_plant(-1.0, 1.0);
        let x0 = Vector::from_element(1, 0.7);
        let u: Vec<Vector> = [0.3, -0.2, 0.1, 0.5]
            .iter()
            .map(|&v| Vector::from_element(1, v))
            .collect();
        let condensed = LinearOcp::new(&sys, &cost, &term, 4)
            .unwrap()
            .objective(&x0, &u);
        let (shoot, _) = shooting_cost(&sys, &cost, &term, &x0, &u, false);
        assert!((condensed - shoot).abs() < 1e-10 * shoot);
    }
}
