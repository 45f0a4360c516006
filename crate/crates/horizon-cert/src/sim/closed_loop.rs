//! Receding-horizon simulation, trace export and the closed-loop checks
//! that certificates predict.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ocp::{OcpOptions, OcpSolution, OcpSolver, TerminalCostSpec};
use crate::error::{domain, Result};
use crate::linalg::Vector;
use crate::system::{Model, QuadraticStageCost};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedLoopOptions {
    pub steps: usize,
    pub ocp: OcpOptions,
    /// Also solve from the constant sequence u_s on nonlinear plants and
    /// keep the better of the two.
    pub cold_start: bool,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            ocp: OcpOptions::default(),
            cold_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopTrace {
    /// x(0..=T).
    pub states: Vec<Vector>,
    /// u(0..T).
    pub inputs: Vec<Vector>,
    pub stage_costs: Vec<f64>,
    /// V_N(x(k)) for k < T.
    pub values: Vec<f64>,
    /// Filled by [`ClosedLoopTrace::set_residuals`]; NaN where unknown.
    pub lyap_residual: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Steps at which the shifted candidate beat the solver output.
    pub fallback_steps: Vec<usize>,
}

/// Run parameters written next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: String,
    pub horizon: usize,
    pub terminal: String,
    pub x0: Vec<f64>,
    pub options: ClosedLoopOptions,
    pub steps: usize,
    pub non_converged_steps: usize,
    pub fallback_steps: usize,
    pub performance_sum: f64,
    pub final_deviation: f64,
}

impl ClosedLoopTrace {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// J^μ_T = Σ_{k<T} ℓ(x(k), u(k)).
    pub fn performance_sum(&self) -> f64 {
        self.stage_costs.iter().sum()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trace holds the initial state")
    }

    pub fn set_residuals(&mut self, residuals: &[f64]) {
        self.lyap_residual = (0..self.len())
            .map(|k| residuals.get(k).copied().unwrap_or(f64::NAN))
            .collect();
    }

    pub fn meta(
        &self,
        model: &str,
        horizon: usize,
        terminal: &TerminalCostSpec,
        options: &ClosedLoopOptions,
        x_s: &Vector,
    ) -> TraceMeta {
        TraceMeta {
            model: model.to_string(),
            horizon,
            terminal: terminal.label().to_string(),
            x0: self.states[0].iter().copied().collect(),
            options: options.clone(),
            steps: self.len(),
            non_converged_steps: self.converged.iter().filter(|c| !**c).count(),
            fallback_steps: self.fallback_steps.len(),
            performance_sum: self.performance_sum(),
            final_deviation: (self.final_state() - x_s).norm(),
        }
    }

    /// Columns k, x_1..x_n, u_1..u_m, stage_cost, V_N, lyap_residual.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states[0].len();
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend(["stage_cost", "V_N", "lyap_residual"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.states[k].iter().map(|v| format!("{v:.12e}")));
            row.extend(self.inputs[k].iter().map(|v| format!("{v:.12e}")));
            row.push(format!("{:.12e}", self.stage_costs[k]));
            row.push(format!("{:.12e}", self.values[k]));
            row.push(format!(
                "{:.12e}",
                self.lyap_residual.get(k).copied().unwrap_or(f64::NAN)
            ));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn shifted(prev: &OcpSolution, u_s: &Vector) -> Vec<Vector> {
    let mut w: Vec<Vector> = prev.inputs[1..].to_vec();
    w.push(u_s.clone());
    w
}

/// Applies the first optimal input at every step. Each solve starts from
/// the shifted previous solution; if the result costs more than that
/// feasible candidate, the candidate is applied instead.
pub fn closed_loop(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    terminal: &TerminalCostSpec,
    horizon: usize,
    x0: &Vector,
    opts: &ClosedLoopOptions,
) -> Result<ClosedLoopTrace> {
    if x0.len() != model.state_dim() {
        return domain("initial state has the wrong dimension");
    }
    let solver = OcpSolver::new(model, cost, terminal, horizon, &opts.ocp)?;
    let cold: Vec<Vector> = vec![cost.u_s.clone(); horizon];
    let tol = if solver.is_linear() {
        opts.ocp.tol_linear
    } else {
        opts.ocp.tol_nonlinear
    };
    let mut trace = ClosedLoopTrace {
        states: vec![x0.clone()],
        inputs: Vec::with_capacity(opts.steps),
        stage_costs: Vec::with_capacity(opts.steps),
        values: Vec::with_capacity(opts.steps),
        lyap_residual: Vec::new(),
        converged: Vec::with_capacity(opts.steps),
        iterations: Vec::with_capacity(opts.steps),
        fallback_steps: Vec::new(),
    };
    let mut prev: Option<OcpSolution> = None;
    let mut x = x0.clone();
    for k in 0..opts.steps {
        let warm = prev.as_ref().map(|p| shifted(p, &cost.u_s));
        let mut sol = solver.solve(&x, warm.as_deref(), &opts.ocp)?;
        if opts.cold_start && !solver.is_linear() && warm.is_some() {
            let alt = solver.solve(&x, Some(&cold), &opts.ocp)?;
            if alt.value < sol.value {
                sol = alt;
            }
        }
        if let Some(cand) = warm {
            let cand_value = solver.objective(&x, &cand);
            if sol.value > cand_value + tol * (1.0 + cand_value.abs()) {
                trace.fallback_steps.push(k);
                let states = vec![x.clone()];
                sol = OcpSolution {
                    inputs: cand,
                    states,
                    value: cand_value,
                    iterations: sol.iterations,
                    residual: sol.residual,
                    converged: sol.converged,
                };
            }
        }
        let u = sol.inputs[0].clone();
        let next = model.step(&x, &u);
        trace.stage_costs.push(cost.eval(&x, &u));
        trace.values.push(sol.value);
        trace.converged.push(sol.converged);
        trace.iterations.push(sol.iterations);
        trace.inputs.push(u);
        trace.states.push(next.clone());
        x = next;
        prev = Some(sol);
    }
    trace.lyap_residual = vec![f64::NAN; trace.len()];
    Ok(trace)
}

/// r_k = Y(x(k+1)) − Y(x(k)) + ε_o α σ(x(k)) with Y = V_N + W, for every
/// k with both values sampled. `w` and `sigma` are indexed like the states.
pub fn lyapunov_residuals(
    trace: &ClosedLoopTrace,
    w: &[f64],
    sigma: &[f64],
    eps_o: f64,
    alpha: f64,
) -> Vec<f64> {
    let t = trace.values.len();
    (0..t.saturating_sub(1))
        .map(|k| {
            (trace.values[k + 1] + w[k + 1]) - (trace.values[k] + w[k]) + eps_o * alpha * sigma[k]
        })
        .collect()
}

/// Applies `f` to every state of the trace.
pub fn state_values(trace: &ClosedLoopTrace, f: impl Fn(&Vector) -> f64) -> Vec<f64> {
    trace.states.iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Satisfied,
    Violated,
    /// α ≤ 0: the bound claims nothing.
    Vacuous,
    /// The trace has not settled, so J^μ_T may miss a relevant tail.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCheck {
    pub status: CheckStatus,
    /// α (J^μ_T + W(x0)).
    pub lhs: f64,
    /// factor · (V_∞ + W(x0)).
    pub rhs: f64,
    pub slack: f64,
    pub tail_stage_cost: f64,
}

/// Checks α(J^μ_T + W(x0)) ≤ factor·(V_∞ + W(x0)) + tol. Use factor = 1
/// without terminal cost and the inflation factor with one.
pub fn performance_ratio(
    trace: &ClosedLoopTrace,
    w_x0: f64,
    v_inf: f64,
    alpha: f64,
    factor: f64,
    tol: f64,
    tail_tol: f64,
) -> PerformanceCheck {
    let j = trace.performance_sum();
    let tail = trace.stage_costs.last().copied().unwrap_or(0.0);
    let lhs = alpha * (j + w_x0);
    let rhs = factor * (v_inf + w_x0);
    let slack = rhs + tol - lhs;
    let status = if !(alpha > 0.0) {
        CheckStatus::Vacuous
    } else if tail > tail_tol * (1.0 + j) {
        CheckStatus::Inconclusive
    } else if slack >= 0.0 {
        CheckStatus::Satisfied
    } else {
        CheckStatus::Violated
    };
    PerformanceCheck {
        status,
        lhs,
        rhs,
        slack,
        tail_stage_cost: tail,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitCycleOptions {
    /// Trailing fraction of the trace that is inspected.
    pub window: f64,
    pub theta: f64,
    pub bound: f64,
    /// An input counts as saturated within this fraction of the box width
    /// from a bound.
    pub saturation_margin: f64,
}

impl Default for LimitCycleOptions {
    fn default() -> Self {
        Self {
            window: 0.25,
            theta: 1e-2,
            bound: 1e6,
            saturation_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleVerdict {
    pub detected: bool,
    pub min_deviation: f64,
    pub max_deviation: f64,
    /// Share of window inputs with some component near a bound.
    pub saturation: f64,
}

/// Trailing-window test: the deviation from x_s stays above θ over the
/// window while remaining below the bound.
pub fn detect_limit_cycle(
    trace: &ClosedLoopTrace,
    model: &dyn Model,
    x_s: &Vector,
    opts: &LimitCycleOptions,
) -> LimitCycleVerdict {
    let t = trace.len();
    let start = t - ((t as f64 * opts.window).ceil() as usize).clamp(1, t.max(1));
    let devs: Vec<f64> = trace.states[start + 1..=t]
        .iter()
        .map(|x| (x - x_s).norm())
        .collect();
    let min_deviation = devs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_deviation = devs.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = (model.input_lower(), model.input_upper());
    let near = |i: usize, v: f64| {
        let width = hi[i] - lo[i];
        width.is_finite()
            && (v - lo[i] <= opts.saturation_margin * width
                || hi[i] - v <= opts.saturation_margin * width)
    };
    let saturated = trace.inputs[start..]
        .iter()
        .filter(|u| u.iter().enumerate().any(|(i, v)| near(i, *v)))
        .count();
    LimitCycleVerdict {
        detected: min_deviation > opts.theta && max_deviation < opts.bound,
        min_deviation,
        max_deviation,
        saturation: saturated as f64 / (t - start).max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::system::LinearSystem;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn stable_plant_decays_and_csv_shape() {
        let sys = LinearSystem::new(
            s(1.2),
            s(1.0),
            s(1.0),
            Vector::from_element(1, -1.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        let cost = QuadraticStageCost::at_origin(s(1.0), s(1.0), 0.0, 0.1, 1).unwrap();
        let opts = ClosedLoopOptions {
            steps: 30,
            ..Default::default()
        };
        let mut trace = closed_loop(
            &sys,
            &cost,
            &TerminalCostSpec::None,
            8,
            &Vector::from_element(1, 2.0),
            &opts,
        )
        .unwrap();
        assert!(trace.final_state().norm() < 1e-8);
        let w = vec![0.0; trace.states.len()];
        let sigma = state_values(&trace, |x| cost.state_part(x));
        let r = lyapunov_residuals(&trace, &w, &sigma, 1.0, 0.0);
        trace.set_residuals(&r);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,x_1,u_1,stage_cost,V_N,lyap_residual\n"));
        assert_eq!(text.lines().count(), 31);
    }

    #[test]
    fn vacuous_performance() {
        let trace = ClosedLoopTrace {
            states: vec![Vector::zeros(1)],
            inputs: vec![],
            stage_costs: vec![],
            values: vec![],
            lyap_residual: vec![],
            converged: vec![],
            iterations: vec![],
            fallback_steps: vec![],
        };
        assert_eq!(
            performance_ratio(&trace, 0.0, 1.0, -0.5, 1.0, 0.0, 1e-6).status,
            CheckStatus::Vacuous
        );
    }
}
