use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// Which state measure σ the constants are normalized against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// σ = ℓ_min, no storage: γ̲_o = γ̄_o = 0 and ε_o = 1.
    StageCost,
    /// σ = W: γ̲_o = γ̄_o = 1 and ε_o ∈ (0,1).
    Storage,
    General,
}

/// Cost controllability and detectability constants.
///
/// `gamma[k-1]` holds γ_k, so the sequence starts at k = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationConstants<T> {
    pub gamma: Vec<T>,
    pub gamma_bar: T,
    pub eps_o: T,
    pub gamma_o_lower: T,
    pub gamma_o_upper: T,
    pub sigma_mode: SigmaMode,
}

fn seq_max<T: Scalar>(g: &[T]) -> T {
    g.iter().fold(T::zero(), |m, &x| m.max(x))
}

impl<T: Scalar> CertificationConstants<T> {
    pub fn stage_cost(gamma: Vec<T>) -> Self {
        Self {
            gamma_bar: seq_max(&gamma),
            gamma,
            eps_o: T::one(),
            gamma_o_lower: T::zero(),
            gamma_o_upper: T::zero(),
            sigma_mode: SigmaMode::StageCost,
        }
    }

    pub fn storage(gamma: Vec<T>, eps_o: T) -> Self {
        Self {
            gamma_bar: seq_max(&gamma),
            gamma,
            eps_o,
            gamma_o_lower: T::one(),
            gamma_o_upper: T::one(),
            sigma_mode: SigmaMode::Storage,
        }
    }

    pub fn general(gamma: Vec<T>, eps_o: T, gamma_o_lower: T, gamma_o_upper: T) -> Self {
        Self {
            gamma_bar: seq_max(&gamma),
            gamma,
            eps_o,
            gamma_o_lower,
            gamma_o_upper,
            sigma_mode: SigmaMode::General,
        }
    }

    /// Constant sequence γ_k = g for k = 1..=len.
    pub fn constant(mode: SigmaMode, g: T, len: usize, eps_o: T) -> Self {
        let gamma = vec![g; len];
        match mode {
            SigmaMode::StageCost => Self::stage_cost(gamma),
            SigmaMode::Storage => Self::storage(gamma, eps_o),
            SigmaMode::General => Self::general(gamma, eps_o, T::one(), T::one()),
        }
    }

    pub fn with_gamma_bar(mut self, gamma_bar: T) -> Self {
        self.gamma_bar = gamma_bar;
        self
    }

    pub fn eta(&self) -> T {
        T::one() - self.eps_o
    }

    /// γ_k with 1-based `k`.
    pub fn gamma_at(&self, k: usize) -> Result<T> {
        gamma_at(&self.gamma, k)
    }

    pub fn require_len(&self, n: usize) -> Result<()> {
        require_len(&self.gamma, n)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(1e-12) * (T::one() + self.gamma_bar.abs());
        if self.gamma.iter().any(|g| !g.is_finite() || *g < T::zero()) {
            return domain("gamma entries must be finite and non-negative");
        }
        if self.gamma.iter().any(|&g| g > self.gamma_bar + tol) {
            return domain("gamma_bar must dominate every gamma_k");
        }
        if !(self.eps_o > T::zero() && self.eps_o <= T::one()) {
            return domain("eps_o must lie in (0,1]");
        }
        if self.gamma_o_lower < T::zero() || self.gamma_o_lower > self.gamma_o_upper {
            return domain("need 0 <= gamma_o_lower <= gamma_o_upper");
        }
        match self.sigma_mode {
            SigmaMode::StageCost
                if !(self.gamma_o_lower == T::zero()
                    && self.gamma_o_upper == T::zero()
                    && self.eps_o == T::one()) =>
            {
                domain("stage-cost mode requires gamma_o = 0 and eps_o = 1")
            }
            SigmaMode::Storage
                if !(self.gamma_o_lower == T::one()
                    && self.gamma_o_upper == T::one()
                    && self.eps_o < T::one()) =>
            {
                domain("storage mode requires gamma_o = 1 and eps_o < 1")
            }
            _ => Ok(()),
        }
    }
}

/// Terminal cost constants. `eps_f = +inf` encodes a terminal cost without
/// any control-Lyapunov property, which reduces every terminal result to
/// its counterpart without terminal cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalConstants<T> {
    pub c_f_lower: T,
    pub c_f_upper: T,
    pub eps_f: T,
    pub gamma_f: Vec<T>,
    pub gamma_f_bar: T,
}

impl<T: Scalar> TerminalConstants<T> {
    pub fn new(c_f_lower: T, c_f_upper: T, eps_f: T, gamma_f: Vec<T>) -> Self {
        Self {
            c_f_lower,
            c_f_upper,
            eps_f,
            gamma_f_bar: seq_max(&gamma_f),
            gamma_f,
        }
    }

    /// V_f ≡ 0: no terminal cost at all.
    pub fn none(gamma: Vec<T>) -> Self {
        Self::new(T::zero(), T::zero(), T::infinity(), gamma)
    }

    pub fn with_gamma_f(mut self, gamma_f: Vec<T>) -> Self {
        self.gamma_f_bar = seq_max(&gamma_f);
        self.gamma_f = gamma_f;
        self
    }

    pub fn with_gamma_f_bar(mut self, gamma_f_bar: T) -> Self {
        self.gamma_f_bar = gamma_f_bar;
        self
    }

    pub fn is_clf_free(&self) -> bool {
        self.eps_f.is_infinite()
    }

    /// True when the terminal cost vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.c_f_upper == T::zero()
    }

    pub fn gamma_f_at(&self, k: usize) -> Result<T> {
        gamma_at(&self.gamma_f, k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_f_lower < T::zero() || self.c_f_upper < self.c_f_lower {
            return domain("need 0 <= c_f_lower <= c_f_upper");
        }
        if self.eps_f.is_nan() || self.eps_f < T::zero() {
            return domain("eps_f must be non-negative (or +inf)");
        }
        if self
            .gamma_f
            .iter()
            .any(|g| !g.is_finite() || *g < T::zero())
        {
            return domain("gamma_f entries must be finite and non-negative");
        }
        Ok(())
    }

    /// Checks c̲_f ≤ γ_{1,f}/(1+ε_f) ≤ c̄_f.
    pub fn sandwich_holds(&self, tol: T) -> Result<bool> {
        if self.eps_f.is_infinite() {
            return Ok(true);
        }
        let mid = self.gamma_f_at(1)? / (T::one() + self.eps_f);
        Ok(self.c_f_lower <= mid + tol && mid <= self.c_f_upper + tol)
    }
}

pub(crate) fn gamma_at<T: Scalar>(g: &[T], k: usize) -> Result<T> {
    if k == 0 {
        return domain("gamma index starts at 1");
    }
    g.get(k - 1).copied().ok_or(Error::InsufficientGamma {
        needed: k,
        have: g.len(),
    })
}

pub(crate) fn require_len<T>(g: &[T], n: usize) -> Result<()> {
    if g.len() < n {
        Err(Error::InsufficientGamma {
            needed: n,
            have: g.len(),
        })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_validate() {
        assert!(CertificationConstants::stage_cost(vec![1.0, 2.0])
            .validate()
            .is_ok());
        assert!(CertificationConstants::storage(vec![1.0], 0.5)
            .validate()
            .is_ok());
        assert!(CertificationConstants::storage(vec![1.0], 1.0)
            .validate()
            .is_err());
        let mut c = CertificationConstants::stage_cost(vec![1.0]);
        c.gamma_bar = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn gamma_indexing_is_one_based() {
        let c = CertificationConstants::stage_cost(vec![1.0f32, 2.0, 3.0]);
        assert_eq!(c.gamma_at(1).unwrap(), 1.0);
        assert_eq!(c.gamma_at(3).unwrap(), 3.0);
        assert!(matches!(
            c.gamma_at(4),
            Err(Error::InsufficientGamma { .. })
        ));
        assert!(c.gamma_at(0).is_err());
    }

    #[test]
    fn terminal_sandwich() {
        let t = TerminalConstants::new(1.0, 1.0, 1.0, vec![2.0]);
        assert!(t.sandwich_holds(1e-12).unwrap());
        let t = TerminalConstants::new(1.5, 2.0, 1.0, vec![2.0]);
        assert!(!t.sandwich_holds(1e-12).unwrap());
        assert!(TerminalConstants::none(vec![2.0])
            .sandwich_holds(0.0)
            .unwrap());
    }
}
