//! Certification pipeline: constants estimation, closed-form bounds and LP
//! certificates per sweep point, plus closed-loop validation runs.

use horizon_cert::bounds::{
    alpha_hat_eq13, alpha_hat_eq16, alpha_hat_eq7, alpha_hat_eq9, alpha_thm1, alpha_thm5,
    first_stabilizing, n_min_eq15, n_min_eq17, n_min_eq8, n_min_thm1, n_min_thm5,
    terminal_constants_scaled,
};
use horizon_cert::estimation::{
    gamma_linear_openloop, gamma_nonlinear_grid, narx_storage, synthesize_storage_linear,
    terminal_finite_tail_linear, terminal_scaled_linear, verify_storage, GridMeasure, Provenance,
    StorageCandidate, StorageVerification,
};
use horizon_cert::linalg::{QuadMeasure, Vector};
use horizon_cert::lp::{alpha_lp12, alpha_lp6, build_lp12, build_lp6};
use horizon_cert::sim::{
    closed_loop, detect_limit_cycle, lyapunov_residuals, state_values, ClosedLoopOptions,
    ClosedLoopTrace, LimitCycleVerdict, TraceMeta,
};
use horizon_cert::system::{QuadraticStageCost, StateMeasure};
use horizon_cert::{Constants, Horizon, Method, Suboptimality, Terminal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BoundsConfig, DesignConfig, Plant, ScenarioConfig, SigmaPath, TerminalConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub lp_dump: bool,
}

/// One point of the (q, r, N) grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub param: String,
    pub q: f64,
    pub r: f64,
    pub horizon: usize,
}

impl ScenarioConfig {
    /// Cartesian product of the sweep lists; an empty list keeps the base
    /// value and drops out of the parameter label.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let or_base = |v: &[f64], base: f64| {
            if v.is_empty() {
                vec![base]
            } else {
                v.to_vec()
            }
        };
        let qs = or_base(&self.sweep.q, self.cost.q);
        let rs = or_base(&self.sweep.r, self.cost.r);
        let ns = if self.sweep.n.is_empty() {
            vec![self.analysis.horizon]
        } else {
            self.sweep.n.clone()
        };
        let mut out = Vec::with_capacity(qs.len() * rs.len() * ns.len());
        for &q in &qs {
            for &r in &rs {
                for &n in &ns {
                    let mut parts = Vec::new();
                    if !self.sweep.q.is_empty() {
                        parts.push(format!("q={q:.6e}"));
                    }
                    if !self.sweep.r.is_empty() {
                        parts.push(format!("r={r:.6e}"));
                    }
                    if !self.sweep.n.is_empty() {
                        parts.push(format!("N={n}"));
                    }
                    let param = if parts.is_empty() {
                        "base".to_string()
                    } else {
                        parts.join(";")
                    };
                    out.push(SweepPoint {
                        param,
                        q,
                        r,
                        horizon: n,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageEvidence {
    pub eps_o: f64,
    pub candidates: Vec<StorageCandidate>,
    pub verification: Option<StorageVerification>,
}

/// Constants behind a group of report rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsSnapshot {
    pub param: String,
    pub sigma: SigmaPath,
    pub terminal: String,
    pub constants: Option<Constants>,
    pub terminal_constants: Option<Terminal>,
    pub provenance: Option<Provenance>,
    pub storage: Option<StorageEvidence>,
    /// Grid points evaluated, skipped (σ = 0) and diverged.
    pub grid_counts: Option<[usize; 3]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub param: String,
    pub sigma: SigmaPath,
    pub method: Method,
    pub terminal: String,
    pub horizon: usize,
    pub alpha: Option<f64>,
    /// Every N > n_min is certified. For LP rows: one less than the first
    /// certified N up to the search cap, `None` when none was found.
    pub n_min: Option<f64>,
    pub provenance: Option<Provenance>,
    /// Index into [`CertificationReport::snapshots`].
    pub snapshot: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpDump {
    pub file_name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutcome {
    pub name: String,
    pub q: f64,
    pub r: f64,
    pub horizon: usize,
    pub terminal: String,
    pub final_deviation: Option<f64>,
    pub converged: Option<bool>,
    pub limit_cycle: Option<LimitCycleVerdict>,
    pub meta: Option<TraceMeta>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Option<ClosedLoopTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub config: ScenarioConfig,
    pub points: Vec<SweepPoint>,
    pub snapshots: Vec<ConstantsSnapshot>,
    pub rows: Vec<ReportRow>,
    pub simulations: Vec<SimulationOutcome>,
    #[serde(skip)]
    pub lp_dumps: Vec<LpDump>,
}

impl CertificationReport {
    pub fn empty(config: ScenarioConfig) -> Self {
        Self {
            config,
            points: Vec::new(),
            snapshots: Vec::new(),
            rows: Vec::new(),
            simulations: Vec::new(),
            lp_dumps: Vec::new(),
        }
    }

    /// True when some requested certification or simulation produced no
    /// value.
    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
            || self.simulations.iter().any(|s| s.error.is_some())
    }

    pub fn row(
        &self,
        param: &str,
        sigma: SigmaPath,
        method: Method,
        terminal: &str,
    ) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.param == param && r.sigma == sigma && r.method == method && r.terminal == terminal
        })
    }
}

struct PathBase {
    constants: Constants,
    provenance: Provenance,
    /// Factor of P_σ on the exact linear route.
    measure: Option<QuadMeasure>,
    grid: Option<GridMeasure>,
    storage: Option<StorageEvidence>,
    grid_counts: Option<[usize; 3]>,
}

fn err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn grid_route(
    cfg: &ScenarioConfig,
    plant: &Plant,
    cost: &QuadraticStageCost,
    measure: GridMeasure,
    omega: Option<f64>,
) -> CliResult<(Vec<f64>, Provenance, [usize; 3])> {
    let Some(grid) = &cfg.analysis.grid else {
        return err("analysis.grid is required for grid-based constants");
    };
    let est = gamma_nonlinear_grid(
        plant.model(),
        cost,
        &measure,
        grid,
        cfg.analysis.gamma_horizon,
        omega,
    )?;
    Ok((
        est.gamma,
        est.provenance,
        [est.evaluated, est.skipped, est.diverged],
    ))
}

fn narx_measure(cfg: &ScenarioConfig, cost: &QuadraticStageCost) -> GridMeasure {
    GridMeasure::Narx {
        nu: cfg.analysis.storage.nu,
        q: cost.q_y.clone(),
        r: cost.r.clone(),
    }
}

fn path_base(
    cfg: &ScenarioConfig,
    plant: &Plant,
    cost: &QuadraticStageCost,
    sigma: SigmaPath,
) -> CliResult<PathBase> {
    let k = cfg.analysis.gamma_horizon;
    let storage_cfg = &cfg.analysis.storage;
    match (sigma, plant.linear(), storage_cfg.method.linear_method()) {
        (SigmaPath::StageCost, Some(sys), _) => {
            let gamma = gamma_linear_openloop(sys, cost, &StateMeasure::StageCostMin, None, k)?;
            Ok(PathBase {
                constants: Constants::stage_cost(gamma),
                provenance: Provenance::Exact,
                measure: Some(QuadMeasure::from_form(&cost.state_weight())?),
                grid: None,
                storage: None,
                grid_counts: None,
            })
        }
        (SigmaPath::StageCost, None, _) => {
            let measure = GridMeasure::State(StateMeasure::StageCostMin);
            let (gamma, provenance, counts) = grid_route(cfg, plant, cost, measure.clone(), None)?;
            Ok(PathBase {
                constants: Constants::stage_cost(gamma),
                provenance,
                measure: None,
                grid: Some(measure),
                storage: None,
                grid_counts: Some(counts),
            })
        }
        (SigmaPath::Storage, Some(sys), Some(method)) => {
            let syn = synthesize_storage_linear(sys, cost, &storage_cfg.eps_grid(), k, method)?;
            let verification = if storage_cfg.verify_samples > 0 {
                Some(verify_storage(
                    plant.model(),
                    cost,
                    &syn.storage,
                    &StateMeasure::QuadraticForm(syn.p.clone()),
                    (1.0, 1.0),
                    storage_cfg.verify_samples,
                    storage_cfg.verify_radius,
                    cfg.seed,
                )?)
            } else {
                None
            };
            Ok(PathBase {
                storage: Some(StorageEvidence {
                    eps_o: syn.constants.eps_o,
                    candidates: syn.candidates.clone(),
                    verification,
                }),
                measure: Some(syn.measure().clone()),
                constants: syn.constants,
                provenance: Provenance::Exact,
                grid: None,
                grid_counts: None,
            })
        }
        (SigmaPath::Storage, _, None) => {
            let w = narx_storage(storage_cfg.nu, cost.q_y.clone(), cost.r.clone())?;
            let measure = narx_measure(cfg, cost);
            let (gamma, provenance, counts) = grid_route(cfg, plant, cost, measure.clone(), None)?;
            Ok(PathBase {
                constants: Constants::storage(gamma, w.eps_o),
                provenance,
                measure: None,
                grid: Some(measure),
                storage: Some(StorageEvidence {
                    eps_o: w.eps_o,
                    candidates: Vec::new(),
                    verification: None,
                }),
                grid_counts: Some(counts),
            })
        }
        (SigmaPath::Storage, None, Some(_)) => {
            err("quadratic storage synthesis needs a linear model; use the narx storage")
        }
    }
}

fn path_terminal(
    cfg: &ScenarioConfig,
    plant: &Plant,
    cost: &QuadraticStageCost,
    base: &PathBase,
    terminal: &TerminalConfig,
) -> CliResult<Option<Terminal>> {
    let k = cfg.analysis.gamma_horizon;
    let scaled_on_grid = |omega: f64, measure: &GridMeasure| -> CliResult<Terminal> {
        let (gamma_f, _, _) = grid_route(cfg, plant, cost, measure.clone(), Some(omega))?;
        Ok(terminal_constants_scaled(omega, gamma_f[0])?.with_gamma_f(gamma_f))
    };
    match terminal {
        TerminalConfig::None => Ok(None),
        TerminalConfig::Scaled { omega } => match (&base.measure, &base.grid, plant.linear()) {
            (Some(measure), _, Some(sys)) => Ok(Some(
                terminal_scaled_linear(sys, cost, measure, *omega, k)?.0,
            )),
            (_, Some(grid), _) => scaled_on_grid(*omega, grid).map(Some),
            _ => err("no state measure for the scaled terminal cost"),
        },
        TerminalConfig::FiniteTail { m } => match (&base.measure, plant.linear()) {
            (Some(measure), Some(sys)) => Ok(Some(
                terminal_finite_tail_linear(sys, cost, measure, *m, k)?.0,
            )),
            _ => err("finite-tail constants need a linear model and a quadratic measure"),
        },
        TerminalConfig::Quadratic { .. } => {
            err("no certificate constants are derived for a general quadratic terminal cost")
        }
        TerminalConfig::StageWeighting { omega, nu } => match &base.grid {
            Some(grid @ GridMeasure::Narx { nu: lag, .. }) if lag == nu => {
                scaled_on_grid(*omega, grid).map(Some)
            }
            _ => err(
                "stage weighting is certified on the input-output storage path with the same lag",
            ),
        },
    }
}

fn lp_n_min(
    max_n: usize,
    f: impl FnMut(usize) -> horizon_cert::Result<Suboptimality>,
) -> CliResult<Option<f64>> {
    Ok(first_stabilizing(max_n, f)?.map(|n| (n - 1) as f64))
}

type RowValue = CliResult<(Suboptimality, Option<f64>)>;

fn closed_form(
    sigma: SigmaPath,
    c: &Constants,
    t: Option<&Terminal>,
    n: usize,
) -> (Method, RowValue) {
    let bound = |b: horizon_cert::Result<Horizon>| b.map(|h| Some(h.n_min));
    match (sigma, t) {
        (SigmaPath::StageCost, None) => (
            Method::Thm4,
            (|| {
                Ok((
                    alpha_hat_eq9(c, n)?,
                    bound(n_min_eq15(c.gamma_bar, f64::INFINITY))?,
                ))
            })(),
        ),
        (SigmaPath::Storage, None) => (
            Method::Thm3,
            (|| {
                Ok((
                    alpha_hat_eq7(c, n)?,
                    bound(n_min_eq8(c.gamma_bar, c.eps_o))?,
                ))
            })(),
        ),
        (SigmaPath::StageCost, Some(t)) => (
            Method::Thm7,
            (|| {
                Ok((
                    alpha_hat_eq13(t, n)?,
                    bound(n_min_eq15(t.gamma_f_bar, t.eps_f))?,
                ))
            })(),
        ),
        (SigmaPath::Storage, Some(t)) => (
            Method::Thm8,
            (|| {
                Ok((
                    alpha_hat_eq16(c, t, n)?,
                    bound(n_min_eq17(t.gamma_f_bar, c.eps_o, t.eps_f))?,
                ))
            })(),
        ),
    }
}

fn certify_snapshot(
    point: &SweepPoint,
    sigma: SigmaPath,
    c: &Constants,
    t: Option<&Terminal>,
    lp_cap: usize,
) -> Vec<(Method, RowValue)> {
    let n = point.horizon;
    let cap = lp_cap.min(c.gamma.len());
    let general = match t {
        None => (
            Method::Thm1,
            (|| Ok((alpha_thm1(c, n)?, Some(n_min_thm1(c)?.n_min))))(),
        ),
        Some(t) => (
            Method::Thm5,
            (|| Ok((alpha_thm5(c, t, n)?, Some(n_min_thm5(c, t)?.n_min))))(),
        ),
    };
    let lp = match t {
        None => (
            Method::Lp6,
            (|| Ok((alpha_lp6(c, n)?, lp_n_min(cap, |k| alpha_lp6(c, k))?)))(),
        ),
        Some(t) => (
            Method::Lp12,
            (|| {
                let cap = cap.min(t.gamma_f.len());
                Ok((
                    alpha_lp12(c, t, n)?,
                    lp_n_min(cap, |k| alpha_lp12(c, t, k))?,
                ))
            })(),
        ),
    };
    vec![general, closed_form(sigma, c, t, n), lp]
}

fn methods_for(sigma: SigmaPath, terminal: bool) -> [Method; 3] {
    match (sigma, terminal) {
        (SigmaPath::StageCost, false) => [Method::Thm1, Method::Thm4, Method::Lp6],
        (SigmaPath::Storage, false) => [Method::Thm1, Method::Thm3, Method::Lp6],
        (SigmaPath::StageCost, true) => [Method::Thm5, Method::Thm7, Method::Lp12],
        (SigmaPath::Storage, true) => [Method::Thm5, Method::Thm8, Method::Lp12],
    }
}

fn terminal_list(cfg: &ScenarioConfig) -> Vec<TerminalConfig> {
    let mut list = vec![TerminalConfig::None];
    list.extend(
        cfg.terminals
            .iter()
            .filter(|t| **t != TerminalConfig::None)
            .cloned(),
    );
    list
}

struct PointOutput {
    snapshots: Vec<ConstantsSnapshot>,
    /// Rows with snapshot indices local to the point.
    rows: Vec<ReportRow>,
    lp_dumps: Vec<LpDump>,
}

fn lp_dump(
    point: &SweepPoint,
    sigma: SigmaPath,
    terminal: &str,
    c: &Constants,
    t: Option<&Terminal>,
) -> Option<LpDump> {
    let lp = match t {
        None => build_lp6(c, point.horizon),
        Some(t) => build_lp12(c, t, point.horizon),
    }
    .ok()?;
    let param: String = point
        .param
        .chars()
        .map(|ch| {
            if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' {
                ch
            } else {
                '_'
            }
        })
        .collect();
    Some(LpDump {
        file_name: format!("{param}_{}_{terminal}_N{}.lp", sigma.label(), point.horizon),
        text: lp.to_lp_format(),
    })
}

/// Constants for every (σ path, terminal) pair at one point, without bounds.
pub fn estimate_point(
    cfg: &ScenarioConfig,
    plant: &Plant,
    point: &SweepPoint,
) -> Vec<ConstantsSnapshot> {
    let terminals = terminal_list(cfg);
    let cost = cfg.cost.build(plant, point.q, point.r);
    let mut out = Vec::new();
    for &sigma in &cfg.analysis.sigma {
        let base = cost
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|cost| path_base(cfg, plant, cost, sigma).map_err(|e| e.to_string()));
        for terminal in terminals.iter().filter(|t| t.applies_to(sigma)) {
            let mut snap = ConstantsSnapshot {
                param: point.param.clone(),
                sigma,
                terminal: terminal.label().to_string(),
                constants: None,
                terminal_constants: None,
                provenance: None,
                storage: None,
                grid_counts: None,
                error: None,
            };
            match &base {
                Err(e) => snap.error = Some(e.clone()),
                Ok(b) => {
                    snap.constants = Some(b.constants.clone());
                    snap.provenance = Some(b.provenance);
                    snap.storage = b.storage.clone();
                    snap.grid_counts = b.grid_counts;
                    let cost = cost.as_ref().expect("base succeeded");
                    match path_terminal(cfg, plant, cost, b, terminal) {
                        Ok(t) => snap.terminal_constants = t,
                        Err(e) => snap.error = Some(e.to_string()),
                    }
                }
            }
            out.push(snap);
        }
    }
    out
}

fn certify_point(
    cfg: &ScenarioConfig,
    plant: &Plant,
    point: &SweepPoint,
    opts: RunOptions,
) -> PointOutput {
    let snapshots = estimate_point(cfg, plant, point);
    let mut rows = Vec::new();
    let mut lp_dumps = Vec::new();
    for (idx, snap) in snapshots.iter().enumerate() {
        let has_terminal = snap.terminal != "none";
        let row = |method: Method, value: RowValue| {
            let mut row = ReportRow {
                param: point.param.clone(),
                sigma: snap.sigma,
                method,
                terminal: snap.terminal.clone(),
                horizon: point.horizon,
                alpha: None,
                n_min: None,
                provenance: snap.provenance,
                snapshot: idx,
                error: None,
            };
            match value {
                Ok((a, n)) => {
                    row.alpha = Some(a.alpha);
                    row.n_min = n;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        };
        match (&snap.error, &snap.constants) {
            (None, Some(c)) => {
                let t = snap.terminal_constants.as_ref();
                for (method, value) in
                    certify_snapshot(point, snap.sigma, c, t, cfg.analysis.lp_max_horizon)
                {
                    rows.push(row(method, value));
                }
                if opts.lp_dump {
                    lp_dumps.extend(lp_dump(point, snap.sigma, &snap.terminal, c, t));
                }
            }
            (e, _) => {
                let msg = e.clone().unwrap_or_else(|| "constants unavailable".into());
                for method in methods_for(snap.sigma, has_terminal) {
                    rows.push(row(method, Err(CliError::Config(msg.clone()))));
                }
            }
        }
    }
    PointOutput {
        snapshots,
        rows,
        lp_dumps,
    }
}

/// Runs every sweep point (or the base point) concurrently and assembles
/// the rows in sweep order. Per-row failures are recorded, not raised.
pub fn run_certification(cfg: &ScenarioConfig, opts: RunOptions) -> CliResult<CertificationReport> {
    let plant = cfg.plant()?;
    let points = cfg.sweep_points();
    let outputs: Vec<PointOutput> = points
        .par_iter()
        .map(|p| certify_point(cfg, &plant, p, opts))
        .collect();
    let mut report = CertificationReport::empty(cfg.clone());
    report.points = points;
    for out in outputs {
        let offset = report.snapshots.len();
        report.snapshots.extend(out.snapshots);
        report.rows.extend(out.rows.into_iter().map(|mut r| {
            r.snapshot += offset;
            r
        }));
        report.lp_dumps.extend(out.lp_dumps);
    }
    Ok(report)
}

/// Constants for the base point only.
pub fn run_constants(cfg: &ScenarioConfig) -> CliResult<CertificationReport> {
    let plant = cfg.plant()?;
    let mut base = cfg.clone();
    base.sweep = Default::default();
    let points = base.sweep_points();
    let mut report = CertificationReport::empty(base.clone());
    report.snapshots = estimate_point(&base, &plant, &points[0]);
    report.points = points;
    Ok(report)
}

/// Rows from directly supplied constants.
pub fn run_bounds(cfg: &ScenarioConfig, opts: RunOptions) -> CliResult<CertificationReport> {
    let b: &BoundsConfig = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a bounds section".into()))?;
    let c = match b.sigma {
        SigmaPath::StageCost => Constants::stage_cost(b.gamma.clone()),
        SigmaPath::Storage => Constants::storage(b.gamma.clone(), b.eps_o),
    };
    c.validate()?;
    let t = b.terminal.as_ref().map(|t| {
        Terminal::new(
            t.c_f_lower,
            t.c_f_upper,
            t.eps_f.unwrap_or(f64::INFINITY),
            t.gamma_f.clone(),
        )
    });
    if let Some(t) = &t {
        t.validate()?;
    }
    let label = if t.is_some() { "given" } else { "none" };
    let mut report = CertificationReport::empty(cfg.clone());
    report.snapshots.push(ConstantsSnapshot {
        param: "given".into(),
        sigma: b.sigma,
        terminal: label.into(),
        constants: Some(c.clone()),
        terminal_constants: t.clone(),
        provenance: None,
        storage: None,
        grid_counts: None,
        error: None,
    });
    for &n in &b.horizons {
        let point = SweepPoint {
            param: format!("N={n}"),
            q: f64::NAN,
            r: f64::NAN,
            horizon: n,
        };
        for (method, value) in
            certify_snapshot(&point, b.sigma, &c, t.as_ref(), cfg.analysis.lp_max_horizon)
        {
            let mut row = ReportRow {
                param: point.param.clone(),
                sigma: b.sigma,
                method,
                terminal: label.into(),
                horizon: n,
                alpha: None,
                n_min: None,
                provenance: None,
                snapshot: 0,
                error: None,
            };
            match value {
                Ok((a, nm)) => {
                    row.alpha = Some(a.alpha);
                    row.n_min = nm;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            report.rows.push(row);
        }
        if opts.lp_dump {
            report
                .lp_dumps
                .extend(lp_dump(&point, b.sigma, label, &c, t.as_ref()));
        }
        report.points.push(point);
    }
    Ok(report)
}

fn simulate_design(
    cfg: &ScenarioConfig,
    plant: &Plant,
    design: &DesignConfig,
) -> SimulationOutcome {
    let sim = cfg.simulation.as_ref().expect("caller checked");
    let q = design.q.unwrap_or(cfg.cost.q);
    let r = design.r.unwrap_or(cfg.cost.r);
    let mut out = SimulationOutcome {
        name: design.name.clone(),
        q,
        r,
        horizon: design.horizon,
        terminal: design.terminal.label().to_string(),
        final_deviation: None,
        converged: None,
        limit_cycle: None,
        meta: None,
        error: None,
        trace: None,
    };
    let run = || -> CliResult<(ClosedLoopTrace, QuadraticStageCost, ClosedLoopOptions)> {
        let cost = cfg.cost.build(plant, q, r)?;
        let spec = design.terminal.spec()?;
        if sim.x0_deviation.len() != plant.model().state_dim() {
            return err("simulation.x0_deviation has the wrong dimension");
        }
        let x0 = &cost.x_s + Vector::from_vec(sim.x0_deviation.clone());
        let opts = ClosedLoopOptions {
            steps: sim.steps,
            ocp: sim.ocp.clone(),
            cold_start: sim.cold_start,
        };
        let mut trace = closed_loop(plant.model(), &cost, &spec, design.horizon, &x0, &opts)?;
        // V_N(x(k+1)) − V_N(x(k)): the residual with zero storage and α = 0.
        let zeros = vec![0.0; trace.states.len()];
        let sigma = state_values(&trace, |x| cost.state_part(x));
        let res = lyapunov_residuals(&trace, &zeros, &sigma, 1.0, 0.0);
        trace.set_residuals(&res);
        Ok((trace, cost, opts))
    };
    match run() {
        Ok((trace, cost, opts)) => {
            let spec = design.terminal.spec().expect("validated in run");
            let meta = trace.meta(plant.name(), design.horizon, &spec, &opts, &cost.x_s);
            out.final_deviation = Some(meta.final_deviation);
            out.converged = Some(meta.final_deviation <= sim.converge_tol);
            out.limit_cycle = Some(detect_limit_cycle(
                &trace,
                plant.model(),
                &cost.x_s,
                &sim.limit_cycle,
            ));
            out.meta = Some(meta);
            out.trace = Some(trace);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Closed-loop runs for every configured design, concurrently.
pub fn run_simulations(cfg: &ScenarioConfig) -> CliResult<Vec<SimulationOutcome>> {
    let Some(sim) = &cfg.simulation else {
        return err("this command needs a simulation section");
    };
    let plant = cfg.plant()?;
    Ok(sim
        .designs
        .par_iter()
        .map(|d| simulate_design(cfg, &plant, d))
        .collect())
}
