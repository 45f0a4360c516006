//! Suboptimality and stabilizing-horizon certificates for receding-horizon
//! control with economic stage costs.

pub mod bounds;
pub mod constants;
pub mod error;
pub mod estimation;
pub mod lemmas;
pub mod linalg;
pub mod lp;
pub mod models;
pub mod scalar;
pub mod sim;
pub mod system;

pub use bounds::{HorizonBound, HorizonFormula, Method, SuboptimalityResult};
pub use constants::{CertificationConstants, SigmaMode, TerminalConstants};
pub use error::{Error, Result};
pub use lp::{DenseLp, LpSolution, LpStatus};
pub use scalar::Scalar;

pub type Constants = CertificationConstants<f64>;
pub type Terminal = TerminalConstants<f64>;
pub type Suboptimality = SuboptimalityResult<f64>;
pub type Horizon = HorizonBound<f64>;
pub type Lp = DenseLp<f64>;
pub type ConstantsF32 = CertificationConstants<f32>;
pub type TerminalF32 = TerminalConstants<f32>;
pub type LpF32 = DenseLp<f32>;
