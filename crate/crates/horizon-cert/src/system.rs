//! Plant models, quadratic stage costs, state measures and storage
//! functions. Costs and measures are evaluated in deviation coordinates
//! around the setpoint (x_s, u_s).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{cholesky_lower, Mat, Vector};

/// Discrete-time plant x⁺ = f(x, u) with box input constraints.
pub trait Model: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &Vector, u: &Vector) -> Vector;
    /// Successor state together with ∂f/∂x and ∂f/∂u.
    fn step_with_jacobians(&self, x: &Vector, u: &Vector) -> (Vector, Mat, Mat);
    fn input_lower(&self) -> &Vector;
    fn input_upper(&self) -> &Vector;
    fn as_linear(&self) -> Option<&LinearSystem> {
        None
    }

    fn project_input(&self, u: &Vector) -> Vector {
        u.zip_zip_map(self.input_lower(), self.input_upper(), |v, lo, hi| {
            v.clamp(lo, hi)
        })
    }

    fn input_admissible(&self, u: &Vector) -> bool {
        u.iter()
            .zip(self.input_lower().iter().zip(self.input_upper().iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub u_min: Vector,
    pub u_max: Vector,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, u_min: Vector, u_max: Vector) -> Result<Self> {
        let sys = Self {
            a,
            b,
            c,
            u_min,
            u_max,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Plant without input constraints.
    pub fn unconstrained(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let m = b.ncols();
        Self::new(
            a,
            b,
            c,
            Vector::from_element(m, f64::NEG_INFINITY),
            Vector::from_element(m, f64::INFINITY),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.b.nrows() != n || self.c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                self.c.nrows(),
                self.c.ncols()
            )));
        }
        let m = self.b.ncols();
        if self.u_min.len() != m || self.u_max.len() != m {
            return Err(Error::Dimension("input bounds do not match B".into()));
        }
        if self
            .u_min
            .iter()
            .zip(self.u_max.iter())
            .any(|(lo, hi)| !(lo <= hi))
        {
            return domain("input box lower bound exceeds upper bound");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

impl Model for LinearSystem {
    fn state_dim(&self) -> usize {
        self.n()
    }
    fn input_dim(&self) -> usize {
        self.m()
    }
    fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }
    fn step_with_jacobians(&self, x: &Vector, u: &Vector) -> (Vector, Mat, Mat) {
        (self.step(x, u), self.a.clone(), self.b.clone())
    }
    fn input_lower(&self) -> &Vector {
        &self.u_min
    }
    fn input_upper(&self) -> &Vector {
        &self.u_max
    }
    fn as_linear(&self) -> Option<&LinearSystem> {
        Some(self)
    }
}

/// ℓ(x,u) = ‖C(x−x_s)‖²_{Q_y} + q‖x−x_s‖² + ‖u−u_s‖²_R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticStageCost {
    pub c: Mat,
    pub q_y: Mat,
    pub q: f64,
    pub r: Mat,
    pub x_s: Vector,
    pub u_s: Vector,
}

impl QuadraticStageCost {
    pub fn new(c: Mat, q_y: Mat, q: f64, r: Mat, x_s: Vector, u_s: Vector) -> Result<Self> {
        let cost = Self {
            c,
            q_y,
            q,
            r,
            x_s,
            u_s,
        };
        cost.validate()?;
        Ok(cost)
    }

    /// Cost regulating to the origin with scalar input weight r·I.
    pub fn at_origin(c: Mat, q_y: Mat, q: f64, r: f64, m: usize) -> Result<Self> {
        let n = c.ncols();
        Self::new(
            c,
            q_y,
            q,
            Mat::identity(m, m) * r,
            Vector::zeros(n),
            Vector::zeros(m),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (p, n, m) = (self.c.nrows(), self.c.ncols(), self.r.nrows());
        if self.q_y.shape() != (p, p)
            || self.r.shape() != (m, m)
            || self.x_s.len() != n
            || self.u_s.len() != m
        {
            return Err(Error::Dimension("stage cost blocks do not match".into()));
        }
        if !(self.q >= 0.0) {
            return domain("state regularization q must be non-negative");
        }
        cholesky_lower(&self.q_y)?;
        cholesky_lower(&self.r)?;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    /// Q̃ = C'Q_yC + qI, the state part of ℓ.
    pub fn state_weight(&self) -> Mat {
        let n = self.state_dim();
        self.c.transpose() * &self.q_y * &self.c + Mat::identity(n, n) * self.q
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> f64 {
        self.state_part(x) + self.input_part(u)
    }

    /// ℓ_min(x) = min_u ℓ(x,u), attained at u = u_s.
    pub fn state_part(&self, x: &Vector) -> f64 {
        let dx = x - &self.x_s;
        let y = &self.c * &dx;
        y.dot(&(&self.q_y * &y)) + self.q * dx.norm_squared()
    }

    pub fn input_part(&self, u: &Vector) -> f64 {
        let du = u - &self.u_s;
        du.dot(&(&self.r * &du))
    }

    /// ‖C(x−x_s)‖²_{Q_y} only.
    pub fn output_part(&self, x: &Vector) -> f64 {
        let y = &self.c * (x - &self.x_s);
        y.dot(&(&self.q_y * &y))
    }
}

/// State measure σ against which constants are normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMeasure {
    StageCostMin,
    QuadraticForm(Mat),
}

impl StateMeasure {
    /// Matrix P_σ with σ(x) = ‖x − x_s‖²_{P_σ}.
    pub fn matrix(&self, cost: &QuadraticStageCost) -> Mat {
        match self {
            StateMeasure::StageCostMin => cost.state_weight(),
            StateMeasure::QuadraticForm(p) => p.clone(),
        }
    }

    pub fn eval(&self, x: &Vector, cost: &QuadraticStageCost) -> f64 {
        match self {
            StateMeasure::StageCostMin => cost.state_part(x),
            StateMeasure::QuadraticForm(p) => {
                let dx = x - &cost.x_s;
                dx.dot(&(p * &dx))
            }
        }
    }

    pub fn validate(&self, cost: &QuadraticStageCost) -> Result<()> {
        cholesky_lower(&self.matrix(cost)).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageKind {
    Zero,
    QuadraticForm(Mat),
    /// Weighted sum of the last ν output and input costs.
    Narx {
        nu: usize,
        q: Mat,
        r: Mat,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageFunction {
    pub kind: StorageKind,
    pub eps_o: f64,
}

impl StorageFunction {
    pub fn zero() -> Self {
        Self {
            kind: StorageKind::Zero,
            eps_o: 1.0,
        }
    }

    pub fn quadratic(p: Mat, eps_o: f64) -> Self {
        Self {
            kind: StorageKind::QuadraticForm(p),
            eps_o,
        }
    }

    /// W at a state given in absolute coordinates. NARX storages need the
    /// input-output history instead, see [`NarxHistory::storage`].
    pub fn eval_state(&self, x: &Vector, x_s: &Vector) -> Result<f64> {
        match &self.kind {
            StorageKind::Zero => Ok(0.0),
            StorageKind::QuadraticForm(p) => {
                let dx = x - x_s;
                Ok(dx.dot(&(p * &dx)))
            }
            StorageKind::Narx { .. } => {
                domain("NARX storage is evaluated on an input-output history")
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let kind = match &self.kind {
            StorageKind::Zero => StorageKind::Zero,
            StorageKind::QuadraticForm(p) => StorageKind::QuadraticForm(p * factor),
            StorageKind::Narx { nu, q, r } => StorageKind::Narx {
                nu: *nu,
                q: q * factor,
                r: r * factor,
            },
        };
        Self {
            kind,
            eps_o: self.eps_o,
        }
    }
}

/// Past outputs and inputs of a NARX model, most recent first, stored as
/// deviations from (y_s, u_s).
#[derive(Debug, Clone, PartialEq)]
pub struct NarxHistory {
    nu: usize,
    entries: VecDeque<(Vector, Vector)>,
}

impl NarxHistory {
    pub fn new(nu: usize) -> Result<Self> {
        if nu < 1 {
            return domain("NARX lag must be at least 1");
        }
        Ok(Self {
            nu,
            entries: VecDeque::with_capacity(nu + 1),
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.nu
    }

    pub fn push(&mut self, dy: Vector, du: Vector) {
        self.entries.push_front((dy, du));
        self.entries.truncate(self.nu);
    }

    /// ℓ̂ = ‖dy‖²_Q + ‖du‖²_R.
    pub fn stage(q: &Mat, r: &Mat, dy: &Vector, du: &Vector) -> f64 {
        dy.dot(&(q * dy)) + du.dot(&(r * du))
    }

    /// W = Σ_{j=1}^{ν} (ν+1−j)/ν · ℓ̂(t−j).
    pub fn storage(&self, q: &Mat, r: &Mat) -> Result<f64> {
        if !self.is_full() {
            return domain("NARX history holds fewer than nu samples");
        }
        let nu = self.nu as f64;
        Ok(self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (dy, du))| (nu - i as f64) / nu * Self::stage(q, r, dy, du))
            .sum())
    }

    /// Mean of the stored stage costs, (1/ν) Σ_j ℓ̂(t−j).
    pub fn mean_stage(&self, q: &Mat, r: &Mat) -> f64 {
        self.entries
            .iter()
            .map(|(dy, du)| Self::stage(q, r, dy, du))
            .sum::<f64>()
            / self.nu as f64
    }
}
