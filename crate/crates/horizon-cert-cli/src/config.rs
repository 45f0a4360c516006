//! Scenario configuration: one JSON document per run.
//!
//! Every section except `name` has defaults, and the parsed value is echoed
//! back in full into the report metadata, so a run can be reproduced from
//! its own output.

use std::path::{Path, PathBuf};

use horizon_cert::estimation::{log_grid, GridSpec, StorageMethod};
use horizon_cert::linalg::{Mat, Vector};
use horizon_cert::models::{msd_chain_model, FourTank, FourTankParams};
use horizon_cert::sim::{LimitCycleOptions, OcpOptions, TerminalCostSpec};
use horizon_cert::system::{LinearSystem, Model, QuadraticStageCost, StateMeasure};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Terminal costs certified in addition to V_f = 0.
    #[serde(default)]
    pub terminals: Vec<TerminalConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    MsdChain {
        #[serde(default = "defaults::masses")]
        masses: usize,
        #[serde(default = "defaults::one")]
        mass: f64,
        #[serde(default = "defaults::spring")]
        spring: f64,
        #[serde(default = "defaults::damping")]
        damping: f64,
        #[serde(default = "defaults::one")]
        sample_time: f64,
    },
    FourTank {
        #[serde(default)]
        params: FourTankParams,
    },
    /// Explicit matrices, row-major as nested lists.
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        u_min: Vec<f64>,
        u_max: Vec<f64>,
    },
}

/// ℓ(x,u) = q_y‖C(x−x_s)‖² + q‖x−x_s‖² + r‖u−u_s‖². The setpoint defaults
/// to the model's own (the origin for linear models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub q_y: f64,
    pub q: f64,
    pub r: f64,
    pub x_s: Option<Vec<f64>>,
    pub u_s: Option<Vec<f64>>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            q_y: 1.0,
            q: 0.0,
            r: 1.0,
            x_s: None,
            u_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPath {
    /// σ = ℓ_min, no storage.
    StageCost,
    /// σ = W with a synthesized storage.
    Storage,
}

impl SigmaPath {
    pub fn label(self) -> &'static str {
        match self {
            SigmaPath::StageCost => "stage_cost",
            SigmaPath::Storage => "storage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageChoice {
    Maximal,
    LyapunovScaling,
    /// Input-output storage of lag ν, estimated on the grid.
    Narx,
}

impl StorageChoice {
    pub fn linear_method(self) -> Option<StorageMethod> {
        match self {
            StorageChoice::Maximal => Some(StorageMethod::Maximal),
            StorageChoice::LyapunovScaling => Some(StorageMethod::LyapunovScaling),
            StorageChoice::Narx => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub method: StorageChoice,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_points: usize,
    pub nu: usize,
    /// Random (state, input) pairs used to spot-check a synthesized storage.
    pub verify_samples: usize,
    pub verify_radius: f64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            method: StorageChoice::Maximal,
            eps_min: 1e-3,
            eps_max: 1.0 - 1e-4,
            eps_points: 4,
            nu: 2,
            verify_samples: 1000,
            verify_radius: 1.0,
        }
    }
}

impl StorageConfig {
    pub fn eps_grid(&self) -> Vec<f64> {
        log_grid(self.eps_min, self.eps_max, self.eps_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sigma: Vec<SigmaPath>,
    pub storage: StorageConfig,
    /// Length K of the estimated γ sequences.
    pub gamma_horizon: usize,
    /// Deviation grid for models without a linear representation.
    pub grid: Option<GridSpec>,
    /// Horizon N at which α_N is reported.
    pub horizon: usize,
    /// Largest N tried when searching the first stabilizing LP horizon.
    pub lp_max_horizon: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sigma: vec![SigmaPath::StageCost, SigmaPath::Storage],
            storage: StorageConfig::default(),
            gamma_horizon: 400,
            grid: None,
            horizon: 5,
            lp_max_horizon: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    None,
    /// V_f = ω̃σ on the certification path; ωℓ_min in simulation.
    Scaled {
        omega: f64,
    },
    FiniteTail {
        m: usize,
    },
    Quadratic {
        p: Vec<Vec<f64>>,
    },
    /// V_f = ωW for the input-output storage of lag ν.
    StageWeighting {
        omega: f64,
        nu: usize,
    },
}

impl TerminalConfig {
    pub fn label(&self) -> &'static str {
        match self {
            TerminalConfig::None => "none",
            TerminalConfig::Scaled { .. } => "scaled",
            TerminalConfig::FiniteTail { .. } => "finite_tail",
            TerminalConfig::Quadratic { .. } => "quadratic",
            TerminalConfig::StageWeighting { .. } => "stage_weighting",
        }
    }

    /// Stage weighting is only defined relative to the input-output storage.
    pub fn applies_to(&self, sigma: SigmaPath) -> bool {
        !matches!(self, TerminalConfig::StageWeighting { .. }) || sigma == SigmaPath::Storage
    }

    /// Closed-loop terminal cost.
    pub fn spec(&self) -> CliResult<TerminalCostSpec> {
        Ok(match self {
            TerminalConfig::None => TerminalCostSpec::None,
            TerminalConfig::Scaled { omega } => TerminalCostSpec::ScaledMeasure {
                omega: *omega,
                measure: StateMeasure::StageCostMin,
            },
            TerminalConfig::FiniteTail { m } => TerminalCostSpec::FiniteTail { m: *m },
            TerminalConfig::Quadratic { p } => TerminalCostSpec::QuadraticForm {
                p: matrix("terminal p", p)?,
            },
            TerminalConfig::StageWeighting { omega, nu } => TerminalCostSpec::StageWeighting {
                omega: *omega,
                nu: *nu,
            },
        })
    }
}

/// Empty lists keep the base value, so an empty sweep is a single point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<usize>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.q.is_empty() && self.r.is_empty() && self.n.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub name: String,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    pub horizon: usize,
    #[serde(default = "defaults::terminal")]
    pub terminal: TerminalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Initial state as a deviation from x_s.
    pub x0_deviation: Vec<f64>,
    #[serde(default = "defaults::steps")]
    pub steps: usize,
    pub designs: Vec<DesignConfig>,
    #[serde(default)]
    pub ocp: OcpOptions,
    #[serde(default)]
    pub cold_start: bool,
    #[serde(default)]
    pub limit_cycle: LimitCycleOptions,
    /// A design counts as converged when ‖x(T) − x_s‖ is at most this.
    #[serde(default = "defaults::converge_tol")]
    pub converge_tol: f64,
}

/// Constants supplied directly, for the `bounds` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub sigma: SigmaPath,
    pub gamma: Vec<f64>,
    #[serde(default = "defaults::one")]
    pub eps_o: f64,
    #[serde(default)]
    pub terminal: Option<TerminalConstantsConfig>,
    pub horizons: Vec<usize>,
}

/// `eps_f = null` encodes a terminal cost without decrease property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConstantsConfig {
    pub c_f_lower: f64,
    pub c_f_upper: f64,
    pub eps_f: Option<f64>,
    pub gamma_f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

mod defaults {
    use super::TerminalConfig;

    pub fn masses() -> usize {
        6
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn spring() -> f64 {
        10.0
    }
    pub fn damping() -> f64 {
        2.0
    }
    pub fn steps() -> usize {
        100
    }
    pub fn converge_tol() -> f64 {
        1e-4
    }
    pub fn terminal() -> TerminalConfig {
        TerminalConfig::None
    }
}

pub fn matrix(what: &str, rows: &[Vec<f64>]) -> CliResult<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{what}: ragged matrix rows")));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// A built plant. Linear models keep their matrices for the exact routes.
#[derive(Debug, Clone)]
pub enum Plant {
    Linear(LinearSystem),
    FourTank(FourTank),
}

impl Plant {
    pub fn model(&self) -> &dyn Model {
        match self {
            Plant::Linear(s) => s,
            Plant::FourTank(t) => t,
        }
    }

    pub fn linear(&self) -> Option<&LinearSystem> {
        match self {
            Plant::Linear(s) => Some(s),
            Plant::FourTank(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Plant::Linear(_) => "linear",
            Plant::FourTank(_) => "four_tank",
        }
    }

    fn output_matrix(&self) -> Mat {
        match self {
            Plant::Linear(s) => s.c.clone(),
            Plant::FourTank(_) => FourTank::output_matrix(),
        }
    }

    fn setpoint(&self) -> (Vector, Vector) {
        match self {
            Plant::Linear(s) => (Vector::zeros(s.n()), Vector::zeros(s.m())),
            Plant::FourTank(t) => (t.x_s.clone(), t.u_s.clone()),
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> CliResult<Plant> {
        Ok(match self {
            ModelConfig::MsdChain {
                masses,
                mass,
                spring,
                damping,
                sample_time,
            } => Plant::Linear(msd_chain_model(
                *masses,
                *mass,
                *spring,
                *damping,
                *sample_time,
            )?),
            ModelConfig::FourTank { params } => Plant::FourTank(FourTank::new(params.clone())?),
            ModelConfig::Linear {
                a,
                b,
                c,
                u_min,
                u_max,
            } => Plant::Linear(LinearSystem::new(
                matrix("a", a)?,
                matrix("b", b)?,
                matrix("c", c)?,
                Vector::from_vec(u_min.clone()),
                Vector::from_vec(u_max.clone()),
            )?),
        })
    }
}

impl CostConfig {
    /// Stage cost with q and r overridden, as used by sweep points.
    pub fn build(&self, plant: &Plant, q: f64, r: f64) -> CliResult<QuadraticStageCost> {
        let c = plant.output_matrix();
        let (mut x_s, mut u_s) = plant.setpoint();
        if let Some(v) = &self.x_s {
            x_s = Vector::from_vec(v.clone());
        }
        if let Some(v) = &self.u_s {
            u_s = Vector::from_vec(v.clone());
        }
        let p = c.nrows();
        let m = u_s.len();
        Ok(QuadraticStageCost::new(
            c,
            Mat::identity(p, p) * self.q_y,
            q,
            Mat::identity(m, m) * r,
            x_s,
            u_s,
        )?)
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Structural checks that need no model evaluation.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let a = &self.analysis;
        if a.horizon == 0 {
            return bad("analysis.horizon must be at least 1");
        }
        if a.gamma_horizon == 0 {
            return bad("analysis.gamma_horizon must be at least 1");
        }
        if a.storage.eps_points == 0
            || !(a.storage.eps_min > 0.0 && a.storage.eps_min <= a.storage.eps_max)
            || a.storage.eps_max >= 1.0
        {
            return bad("analysis.storage eps range must satisfy 0 < eps_min <= eps_max < 1");
        }
        if a.storage.nu == 0 {
            return bad("analysis.storage.nu must be at least 1");
        }
        if !(self.cost.q >= 0.0 && self.cost.r > 0.0 && self.cost.q_y > 0.0) {
            return bad("cost weights must satisfy q >= 0, r > 0, q_y > 0");
        }
        if self.sweep.q.iter().any(|q| !(*q >= 0.0)) || self.sweep.r.iter().any(|r| !(*r > 0.0)) {
            return bad("sweep weights must satisfy q >= 0 and r > 0");
        }
        if self.sweep.n.contains(&0) {
            return bad("sweep horizons must be at least 1");
        }
        let mut labels: Vec<&str> = self.terminals.iter().map(TerminalConfig::label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("each terminal kind may appear once");
        }
        if let Some(sim) = &self.simulation {
            let mut names: Vec<&str> = sim.designs.iter().map(|d| d.name.as_str()).collect();
            names.sort_unstable();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return bad("simulation design names must be unique");
            }
            if sim.designs.iter().any(|d| d.horizon == 0) {
                return bad("simulation horizons must be at least 1");
            }
        }
        if let Some(b) = &self.bounds {
            if b.horizons.contains(&0) || b.gamma.is_empty() {
                return bad("bounds needs a nonempty gamma and horizons >= 1");
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> CliResult<Plant> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a model section".into()))?
            .build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg =
            ScenarioConfig::from_json(r#"{"name": "x", "model": {"kind": "msd_chain"}}"#).unwrap();
        assert_eq!(cfg.analysis.gamma_horizon, 400);
        assert_eq!(cfg.analysis.storage.eps_points, 4);
        match cfg.model.unwrap() {
            ModelConfig::MsdChain { masses, spring, .. } => {
                assert_eq!(masses, 6);
                assert_eq!(spring, 10.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"name": "x", "colour": 1}"#,
            r#"{"name": "x", "model": {"kind": "msd_chain", "springs": 3}}"#,
            r#"{"name": "x", "analysis": {"horizn": 3}}"#,
            r#"{"name": "x", "terminals": [{"kind": "scaled", "omega": 1, "nu": 2}]}"#,
        ] {
            assert!(ScenarioConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn ragged_matrix_is_an_error() {
        assert!(matrix("a", &[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn zero_horizon_rejected() {
        let text = r#"{"name": "x", "sweep": {"n": [3, 0]}}"#;
        assert!(ScenarioConfig::from_json(text).is_err());
    }
}
