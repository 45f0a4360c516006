//! Optimal control solvers and closed-loop simulation.

mod closed_loop;
mod lqr;
mod ocp;

pub use crate::models::exact_discretization;
pub use closed_loop::{
    closed_loop, detect_limit_cycle, lyapunov_residuals, performance_ratio, state_values,
    CheckStatus, ClosedLoopOptions, ClosedLoopTrace, LimitCycleOptions, LimitCycleVerdict,
    PerformanceCheck, TraceMeta,
};
pub use lqr::{finite_horizon_lqr, riccati_value, stationary_lqr, v_infty_oracle, VInfEstimate};
pub use ocp::{
    shooting_cost, solve_box_qp, solve_gauss_newton, solve_ocp, solve_shooting, BoxQpResult,
    LinearOcp, OcpOptions, OcpSolution, OcpSolver, TerminalCostSpec,
};
