//! Closed-form suboptimality indices and stabilizing-horizon bounds.
//!
//! Products of horizon length are evaluated as sums of `ln_1p` terms so
//! that long horizons neither overflow nor lose the small differences the
//! formulas subtract.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constants::{require_len, CertificationConstants, TerminalConstants};
use crate::error::{domain, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Conservative index for general storage.
    Thm1,
    /// Closed form for σ = W.
    Thm3,
    /// Closed form for σ = ℓ_min.
    Thm4,
    /// Conservative index with terminal cost.
    Thm5,
    /// Closed form with terminal cost, σ = ℓ_min.
    Thm7,
    /// Closed form with terminal cost, σ = W.
    Thm8,
    Lp6,
    Lp12,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Thm1 => "thm1",
            Method::Thm3 => "thm3",
            Method::Thm4 => "thm4",
            Method::Thm5 => "thm5",
            Method::Thm7 => "thm7",
            Method::Thm8 => "thm8",
            Method::Lp6 => "lp6",
            Method::Lp12 => "lp12",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonFormula {
    Thm1,
    Eq8,
    Thm5,
    Eq15,
    Eq17,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalityResult<T> {
    pub alpha: T,
    pub horizon: usize,
    pub method: Method,
    pub stabilizing: bool,
}

impl<T: Scalar> SuboptimalityResult<T> {
    pub fn new(alpha: T, horizon: usize, method: Method) -> Self {
        Self {
            alpha,
            horizon,
            method,
            stabilizing: alpha > T::zero(),
        }
    }

    /// Result for a bound whose denominator lost its sign.
    pub fn vacuous(horizon: usize, method: Method) -> Self {
        Self::new(T::neg_infinity(), horizon, method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonBound<T> {
    /// Every horizon N > n_min is stabilizing.
    pub n_min: T,
    pub formula: HorizonFormula,
}

impl<T: Scalar> HorizonBound<T> {
    fn new(n_min: T, formula: HorizonFormula) -> Self {
        Self {
            n_min: n_min.max(T::zero()),
            formula,
        }
    }

    /// Smallest integer horizon N ≥ 1 with N > n_min.
    pub fn min_horizon(&self) -> Option<usize> {
        if !self.n_min.is_finite() {
            return None;
        }
        let n = self.n_min.floor().to_usize()? + 1;
        Some(n.max(1))
    }
}

fn check_horizon(n: usize) -> Result<()> {
    if n == 0 {
        domain("horizon must be at least 1")
    } else {
        Ok(())
    }
}

fn check_eps_o<T: Scalar>(eps_o: T) -> Result<()> {
    if eps_o > T::zero() && eps_o <= T::one() {
        Ok(())
    } else {
        domain("eps_o must lie in (0,1]")
    }
}

/// ln(x/(1+x)) for x ≥ 0.
fn ln_frac<T: Scalar>(x: T) -> T {
    (-(T::one() + x).recip()).ln_1p()
}

/// Returns (R, 1 − R) with
/// R = γ_1/(1+γ_1) · ∏_{i=2}^{N} (η+γ_i)/(1+γ_i).
fn storage_product<T: Scalar>(g: &[T], eps_o: T, n: usize) -> (T, T) {
    let mut s = ln_frac(g[0]);
    for &gi in &g[1..n] {
        s = s + (-eps_o / (T::one() + gi)).ln_1p();
    }
    (s.exp(), -s.exp_m1())
}

/// Returns (P, 1 − P) with P = ∏_{j=2}^{N} (γ_j − 1)/γ_j.
fn stage_product<T: Scalar>(g: &[T], n: usize) -> (T, T) {
    let mut s = T::zero();
    for &gj in &g[1..n] {
        s = s + (-gj.recip()).ln_1p();
    }
    (s.exp(), -s.exp_m1())
}

fn check_at_least_one<T: Scalar>(g: &[T], n: usize) -> Result<()> {
    if g[..n].iter().any(|&x| x < T::one()) {
        domain("gamma_j < 1 impossible under sigma = l_min")
    } else {
        Ok(())
    }
}

/// ε_f clipped at zero: a negative relaxation is at least as good as an
/// exact control-Lyapunov function.
fn eps_f_eff<T: Scalar>(t: &TerminalConstants<T>) -> T {
    t.eps_f.max(T::zero())
}

pub fn alpha_thm1<T: Scalar>(
    c: &CertificationConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    if n <= 1 {
        return domain("Thm1 undefined for N<=1");
    }
    check_eps_o(c.eps_o)?;
    let g = c.gamma_at(n)?;
    let n1 = T::from_usize_lossy(n - 1);
    let alpha = T::one() - g * (g + c.gamma_o_upper) / (c.eps_o * c.eps_o * n1);
    Ok(SuboptimalityResult::new(alpha, n, Method::Thm1))
}

pub fn n_min_thm1<T: Scalar>(c: &CertificationConstants<T>) -> Result<HorizonBound<T>> {
    check_eps_o(c.eps_o)?;
    let g = c.gamma_bar;
    let n = T::one() + (g + c.gamma_o_upper) * g / (c.eps_o * c.eps_o);
    Ok(HorizonBound::new(n, HorizonFormula::Thm1))
}

/// Closed form for σ = W. A nonpositive denominator yields α = −∞.
pub fn alpha_hat_eq7<T: Scalar>(
    c: &CertificationConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    check_horizon(n)?;
    check_eps_o(c.eps_o)?;
    c.require_len(n)?;
    let g = &c.gamma;
    let eta = c.eta();
    let (r, one_minus_r) = storage_product(g, c.eps_o, n);
    if one_minus_r <= T::zero() {
        return Ok(SuboptimalityResult::vacuous(n, Method::Thm3));
    }
    let rhs = (g[n - 1] + eta) * r / one_minus_r;
    Ok(SuboptimalityResult::new(
        T::one() - rhs / c.eps_o,
        n,
        Method::Thm3,
    ))
}

pub fn n_min_eq8<T: Scalar>(gamma_bar: T, eps_o: T) -> Result<HorizonBound<T>> {
    check_eps_o(eps_o)?;
    if gamma_bar <= T::zero() {
        return Ok(HorizonBound::new(T::zero(), HorizonFormula::Eq8));
    }
    let denom = -(-eps_o / (T::one() + gamma_bar)).ln_1p();
    let n = T::one() + (gamma_bar.ln() - eps_o.ln()) / denom;
    Ok(HorizonBound::new(n, HorizonFormula::Eq8))
}

/// Closed form for σ = ℓ_min. N = 1 without terminal cost is always
/// vacuous (the worst case is unbounded).
pub fn alpha_hat_eq9<T: Scalar>(
    c: &CertificationConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    check_horizon(n)?;
    c.require_len(n)?;
    stage_cost_core(&c.gamma, n, Method::Thm4)
}

fn stage_cost_core<T: Scalar>(g: &[T], n: usize, method: Method) -> Result<SuboptimalityResult<T>> {
    check_at_least_one(g, n)?;
    let (p, one_minus_p) = stage_product(g, n);
    if one_minus_p <= T::zero() {
        return Ok(SuboptimalityResult::vacuous(n, method));
    }
    let alpha = T::one() - (g[n - 1] - T::one()) * p / one_minus_p;
    Ok(SuboptimalityResult::new(alpha, n, method))
}

/// True iff c_{k+k2} ≤ c_k c_{k2} for all k, k2 ≥ 1 inside the sequence.
pub fn check_submultiplicativity<T: Scalar>(c: &[T]) -> bool {
    let len = c.len();
    (1..len).all(|k| (1..len - k).all(|k2| c[k + k2] <= c[k] * c[k2]))
}

/// Sufficient conditions under which the terminal closed form for σ = ℓ_min
/// is exact. `c[k]` and `c_f[k]` hold c_k and c_{k,f} from k = 0, and
/// γ_{k,f} = Σ_{j<k} c_j + c_{k,f} must reproduce `gamma_f` (γ_{1,f}, ...).
pub fn check_terminal_tightness<T: Scalar>(
    c: &[T],
    c_f: &[T],
    gamma_f: &[T],
    eps_f: T,
    tol: T,
) -> bool {
    let len = c.len().min(c_f.len());
    let mut acc = T::zero();
    for k in 1..=gamma_f.len() {
        if k > len || k >= c_f.len() {
            return false;
        }
        acc = acc + c[k - 1];
        if (acc + c_f[k] - gamma_f[k - 1]).abs() > tol {
            return false;
        }
    }
    for k in 0..len {
        for k2 in 0..len - k {
            if c[k + k2] > c[k] * c[k2] + tol || c_f[k + k2] > c[k] * c_f[k2] + tol {
                return false;
            }
        }
        if k + 1 < c_f.len() && c[k] + c_f[k + 1] > (T::one() + eps_f) * c_f[k] + tol {
            return false;
        }
    }
    true
}

pub fn alpha_thm5<T: Scalar>(
    c: &CertificationConstants<T>,
    t: &TerminalConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    if t.is_clf_free() {
        return alpha_thm1(c, n);
    }
    check_horizon(n)?;
    check_eps_o(c.eps_o)?;
    let gf = t.gamma_f_at(n)?;
    let ef = eps_f_eff(t);
    if ef == T::zero() || t.gamma_f_bar == T::zero() {
        return Ok(SuboptimalityResult::new(T::one(), n, Method::Thm5));
    }
    let n1 = T::from_usize_lossy(n - 1);
    let den = c.eps_o * (n1 * c.eps_o * (T::one() + ef) + t.gamma_f_bar);
    let alpha = T::one() - (gf + c.gamma_o_upper) * ef * t.gamma_f_bar / den;
    Ok(SuboptimalityResult::new(alpha, n, Method::Thm5))
}

pub fn n_min_thm5<T: Scalar>(
    c: &CertificationConstants<T>,
    t: &TerminalConstants<T>,
) -> Result<HorizonBound<T>> {
    if t.is_clf_free() {
        return n_min_thm1(c);
    }
    check_eps_o(c.eps_o)?;
    let ef = eps_f_eff(t);
    let g = t.gamma_f_bar;
    let e2 = c.eps_o * c.eps_o;
    let n = T::one() + ef / (T::one() + ef) * g * (g + c.gamma_o_upper) / e2
        - g / (c.eps_o * (T::one() + ef));
    Ok(HorizonBound::new(n, HorizonFormula::Thm5))
}

/// Inflation factor on the right-hand side of the terminal-cost
/// performance bound.
pub fn performance_factor_eq11<T: Scalar>(
    c: &CertificationConstants<T>,
    t: &TerminalConstants<T>,
    n: usize,
) -> Result<T> {
    check_eps_o(c.eps_o)?;
    if t.c_f_upper == T::zero() {
        return Ok(T::one());
    }
    let base = (T::one() - c.eps_o / (t.gamma_f_bar + c.gamma_o_upper)).max(T::zero());
    let exp =
        i32::try_from(n).map_err(|_| crate::error::Error::Domain("horizon too large".into()))?;
    Ok(T::one() + t.c_f_upper / c.eps_o * base.powi(exp))
}

/// Terminal closed form for σ = ℓ_min.
pub fn alpha_hat_eq13<T: Scalar>(
    t: &TerminalConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    check_horizon(n)?;
    require_len(&t.gamma_f, n)?;
    if t.is_clf_free() {
        return stage_cost_core(&t.gamma_f, n, Method::Thm7);
    }
    let g = &t.gamma_f;
    check_at_least_one(g, n)?;
    let ef = eps_f_eff(t);
    let (p, one_minus_p) = stage_product(g, n);
    let den = T::one() + ef * one_minus_p;
    let alpha = T::one() - ef * (g[n - 1] - T::one()) * p / den;
    Ok(SuboptimalityResult::new(alpha, n, Method::Thm7))
}

pub fn n_min_eq15<T: Scalar>(gamma_f_bar: T, eps_f: T) -> Result<HorizonBound<T>> {
    if gamma_f_bar < T::one() {
        return domain("gamma_f_bar < 1 impossible under sigma = l_min");
    }
    if eps_f <= T::zero() {
        return Ok(HorizonBound::new(T::zero(), HorizonFormula::Eq15));
    }
    let shift = if eps_f.is_infinite() {
        T::zero()
    } else {
        eps_f.recip().ln_1p()
    };
    let denom = -(-gamma_f_bar.recip()).ln_1p();
    let n = T::one() + (gamma_f_bar.ln() - shift) / denom;
    Ok(HorizonBound::new(n, HorizonFormula::Eq15))
}

/// Terminal closed form for σ = W.
pub fn alpha_hat_eq16<T: Scalar>(
    c: &CertificationConstants<T>,
    t: &TerminalConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    check_horizon(n)?;
    check_eps_o(c.eps_o)?;
    require_len(&t.gamma_f, n)?;
    if t.is_clf_free() {
        let r = alpha_hat_eq7(
            &CertificationConstants::storage(t.gamma_f.clone(), c.eps_o),
            n,
        )?;
        return Ok(SuboptimalityResult::new(r.alpha, n, Method::Thm8));
    }
    let g = &t.gamma_f;
    let eta = c.eta();
    let ef = eps_f_eff(t);
    let (r, one_minus_r) = storage_product(g, c.eps_o, n);
    let den = T::one() + ef * one_minus_r;
    let rhs = ef * (g[n - 1] + eta) * r / den;
    Ok(SuboptimalityResult::new(
        T::one() - rhs / c.eps_o,
        n,
        Method::Thm8,
    ))
}

/// Stabilizing-horizon bound for the terminal closed form with σ = W.
///
/// Solving α̂ > 0 for constant γ gives
/// N > 1 + (ln γ̄_f − ln ε_o − ln(1 + 1/ε_f)) / (ln(1+γ̄_f) − ln(γ̄_f+η)),
/// which reduces to `n_min_eq8` as ε_f → ∞.
pub fn n_min_eq17<T: Scalar>(gamma_f_bar: T, eps_o: T, eps_f: T) -> Result<HorizonBound<T>> {
    check_eps_o(eps_o)?;
    if eps_f <= T::zero() || gamma_f_bar <= T::zero() {
        return Ok(HorizonBound::new(T::zero(), HorizonFormula::Eq17));
    }
    let shift = if eps_f.is_infinite() {
        T::zero()
    } else {
        eps_f.recip().ln_1p()
    };
    let denom = -(-eps_o / (T::one() + gamma_f_bar)).ln_1p();
    let n = T::one() + (gamma_f_bar.ln() - eps_o.ln() - shift) / denom;
    Ok(HorizonBound::new(n, HorizonFormula::Eq17))
}

/// Terminal cost V_f = ω σ.
pub fn terminal_constants_scaled<T: Scalar>(omega: T, gamma_1f: T) -> Result<TerminalConstants<T>> {
    if !(omega > T::zero()) {
        return domain("omega must be positive");
    }
    if gamma_1f < T::zero() {
        return domain("gamma_1f must be non-negative");
    }
    Ok(TerminalConstants::new(
        omega,
        omega,
        gamma_1f / omega - T::one(),
        vec![gamma_1f],
    ))
}

/// Terminal cost formed by the stage costs of M steps of a fallback
/// controller whose stage cost decays like C_ℓ ρ^k.
pub fn terminal_constants_finite_tail<T: Scalar>(
    c_ell: T,
    rho: T,
    m: usize,
) -> Result<TerminalConstants<T>> {
    if c_ell < T::one() {
        return domain("C_ell must be at least 1");
    }
    if !(rho >= T::zero() && rho < T::one()) {
        return domain("rho must lie in [0,1)");
    }
    if m == 0 {
        return domain("tail length must be at least 1");
    }
    let mi = i32::try_from(m).map_err(|_| crate::error::Error::Domain("tail too long".into()))?;
    let c_up = (T::one() - rho.powi(mi)) / (T::one() - rho) * c_ell;
    let eps_f = c_ell * (T::one() - rho) / (rho.powi(-mi) - T::one());
    Ok(TerminalConstants::new(T::one(), c_up, eps_f, Vec::new()))
}

/// Smallest N in `1..=max_n` whose index is positive.
pub fn first_stabilizing<T, F>(max_n: usize, mut f: F) -> Result<Option<usize>>
where
    T: Scalar,
    F: FnMut(usize) -> Result<SuboptimalityResult<T>>,
{
    for n in 1..=max_n {
        if f(n)?.stabilizing {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn storage(g: f64, eps: f64, len: usize) -> CertificationConstants<f64> {
        let mut c = CertificationConstants::storage(vec![g; len], eps);
        c.gamma_o_upper = 1.0;
        c
    }

    #[test]
    fn conservative_storage_bound_values() {
        let c = storage(2.0, 0.5, 5);
        assert!(close(alpha_thm1(&c, 2).unwrap().alpha, -23.0, 1e-14));
        assert!(close(n_min_thm1(&c).unwrap().n_min, 25.0, 1e-14));
        assert!(alpha_thm1(&c, 1).is_err());
        let z = storage(0.0, 0.3, 5);
        assert_eq!(alpha_thm1(&z, 5).unwrap().alpha, 1.0);
        assert_eq!(n_min_thm1(&z).unwrap().n_min, 1.0);
    }

    #[test]
    fn storage_estimate_hand_expansion() {
        let c = storage(2.0, 0.5, 10);
        let a = alpha_hat_eq7(&c, 3).unwrap().alpha;
        assert!(close(0.5 * (1.0 - a), 31.25 / 14.5, 1e-13));
        assert!(alpha_hat_eq7(&c, 9).unwrap().stabilizing);
        assert!(!alpha_hat_eq7(&c, 8).unwrap().stabilizing);
        let nb = n_min_eq8(2.0, 0.5).unwrap();
        assert!(close(nb.n_min, 1.0 + 4f64.ln() / 1.2f64.ln(), 1e-13));
        assert_eq!(nb.min_horizon(), Some(9));
    }

    #[test]
    fn storage_estimate_zero_first_gamma() {
        let c = CertificationConstants::storage(vec![0.0, 3.0, 4.0], 0.4);
        assert_eq!(alpha_hat_eq7(&c, 3).unwrap().alpha, 1.0);
    }

    #[test]
    fn storage_horizon_special_cases() {
        assert_eq!(n_min_eq8(0.0, 0.5).unwrap().n_min, 0.0);
        assert!(close(n_min_eq8(0.3, 0.3).unwrap().n_min, 1.0, 1e-14));
    }

    #[test]
    fn stage_cost_estimate_values() {
        let c = CertificationConstants::stage_cost(vec![2.0; 4]);
        assert!(close(alpha_hat_eq9(&c, 3).unwrap().alpha, 2.0 / 3.0, 1e-14));
        let one = CertificationConstants::stage_cost(vec![1.0; 4]);
        assert_eq!(alpha_hat_eq9(&one, 3).unwrap().alpha, 1.0);
        let bad = CertificationConstants::stage_cost(vec![1.0, 0.5]);
        assert!(alpha_hat_eq9(&bad, 2).is_err());
        assert!(alpha_hat_eq9(&c, 1).unwrap().alpha.is_infinite());
    }

    #[test]
    fn submultiplicativity() {
        let geo: Vec<f64> = (0..10).map(|k| 2.0 * 0.5f64.powi(k)).collect();
        assert!(check_submultiplicativity(&geo));
        assert!(check_submultiplicativity::<f64>(&[]));
        assert!(!check_submultiplicativity(&[1.0, 0.5, 0.5]));
    }

    #[test]
    fn conservative_terminal_bound_values() {
        let c = storage(2.0, 0.5, 5);
        let t = TerminalConstants::new(1.0, 1.0, 1.0, vec![2.0; 5]);
        assert!(close(alpha_thm5(&c, &t, 3).unwrap().alpha, -2.0, 1e-14));
        let t0 = TerminalConstants::new(1.0, 1.0, 0.0, vec![2.0; 5]);
        assert_eq!(alpha_thm5(&c, &t0, 3).unwrap().alpha, 1.0);
        let inf = TerminalConstants::none(vec![2.0; 5]);
        assert_eq!(alpha_thm5(&c, &inf, 3).unwrap(), alpha_thm1(&c, 3).unwrap());
        // ε_f below ε_o/(γ̄_f+γ_o) certifies N = 1.
        let small = TerminalConstants::new(1.0, 1.0, 0.5 / 3.0 * 0.9, vec![2.0; 5]);
        assert!(alpha_thm5(&c, &small, 1).unwrap().stabilizing);
    }

    #[test]
    fn performance_factor_values() {
        let c = storage(2.0, 0.5, 5);
        let t = TerminalConstants::new(1.0, 1.0, 1.0, vec![2.0; 5]);
        assert!(close(
            performance_factor_eq11(&c, &t, 1).unwrap(),
            8.0 / 3.0,
            1e-14
        ));
        let z = TerminalConstants::new(0.0, 0.0, 1.0, vec![2.0; 5]);
        assert_eq!(performance_factor_eq11(&c, &z, 3).unwrap(), 1.0);
        let f: Vec<f64> = (1..20)
            .map(|n| performance_factor_eq11(&c, &t, n).unwrap())
            .collect();
        assert!(f.windows(2).all(|w| w[1] <= w[0] && w[1] >= 1.0));
    }

    #[test]
    fn terminal_stage_cost_estimate_values() {
        let t = TerminalConstants::new(1.0, 1.0, 1.0, vec![2.0; 5]);
        assert!(close(
            alpha_hat_eq13(&t, 2).unwrap().alpha,
            2.0 / 3.0,
            1e-14
        ));
        assert!(close(alpha_hat_eq13(&t, 1).unwrap().alpha, 0.0, 1e-15));
        assert!(close(n_min_eq15(2.0, 1.0).unwrap().n_min, 1.0, 1e-14));
        let inf = TerminalConstants::none(vec![2.0; 5]);
        let c = CertificationConstants::stage_cost(vec![2.0; 5]);
        assert_eq!(
            alpha_hat_eq13(&inf, 4).unwrap().alpha,
            alpha_hat_eq9(&c, 4).unwrap().alpha
        );
    }

    #[test]
    fn terminal_tightness_conditions() {
        // Constant γ_f = 2 with ε_f = 1: c = [2, 0, ...], c_f = [1, 0, ...].
        let c = [2.0, 0.0, 0.0, 0.0];
        let cf = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert!(check_terminal_tightness(&c, &cf, &[2.0; 4], 1.0, 1e-12));
        assert!(!check_terminal_tightness(&c, &cf, &[2.0; 4], 0.5, 1e-12));
    }

    #[test]
    fn terminal_storage_estimate_values() {
        let c = storage(2.0, 0.5, 5);
        let t = TerminalConstants::new(1.0, 1.0, 1.0, vec![2.0; 10]);
        let a = alpha_hat_eq16(&c, &t, 2).unwrap().alpha;
        assert!(close(0.5 * (1.0 - a), 12.5 / 13.0, 1e-13));
        let t0 = TerminalConstants::new(1.0, 1.0, 0.0, vec![2.0; 10]);
        assert_eq!(alpha_hat_eq16(&c, &t0, 3).unwrap().alpha, 1.0);
    }

    #[test]
    fn terminal_storage_horizon_matches_sign_change() {
        let nb = n_min_eq17(2.0, 0.5, 1.0).unwrap();
        assert!(close(nb.n_min, 1.0 + 2f64.ln() / 1.2f64.ln(), 1e-13));
        let c = storage(2.0, 0.5, 10);
        let t = TerminalConstants::new(1.0, 1.0, 1.0, vec![2.0; 10]);
        assert!(!alpha_hat_eq16(&c, &t, 4).unwrap().stabilizing);
        assert!(alpha_hat_eq16(&c, &t, 5).unwrap().stabilizing);
        assert_eq!(nb.min_horizon(), Some(5));
        // Without terminal cost the bound is the plain storage horizon.
        let e = n_min_eq17(2.0, 0.5, f64::INFINITY).unwrap().n_min;
        assert!(close(e, n_min_eq8(2.0, 0.5).unwrap().n_min, 1e-14));
    }

    #[test]
    fn scaled_and_tail_terminals() {
        let t = terminal_constants_scaled(2.0, 3.0).unwrap();
        assert!(close(t.eps_f, 0.5, 1e-15));
        assert_eq!(terminal_constants_scaled(3.0, 3.0).unwrap().eps_f, 0.0);
        assert!(terminal_constants_scaled(0.0, 3.0).is_err());
        let f = terminal_constants_finite_tail(2.0, 0.5, 2).unwrap();
        assert!(close(f.c_f_upper, 3.0, 1e-15));
        assert!(close(f.eps_f, 1.0 / 3.0, 1e-15));
        let one = terminal_constants_finite_tail(2.0, 0.3, 1).unwrap();
        assert!(close(one.eps_f, 0.6, 1e-14));
        assert!(terminal_constants_finite_tail(2.0, 1.0, 2).is_err());
        assert_eq!(
            terminal_constants_finite_tail(2.0, 0.0, 3).unwrap().eps_f,
            0.0
        );
    }

    #[test]
    fn single_precision_agrees() {
        let c32 = CertificationConstants::<f32>::storage(vec![2.0; 5], 0.5);
        let c64 = storage(2.0, 0.5, 5);
        let a32 = alpha_hat_eq7(&c32, 3).unwrap().alpha as f64;
        let a64 = alpha_hat_eq7(&c64, 3).unwrap().alpha;
        assert!(close(a32, a64, 1e-5));
    }

    #[test]
    fn min_horizon_rounding() {
        let b = HorizonBound {
            n_min: 3.0f64,
            formula: HorizonFormula::Eq8,
        };
        assert_eq!(b.min_horizon(), Some(4));
        let b = HorizonBound {
            n_min: 0.2f64,
            formula: HorizonFormula::Eq8,
        };
        assert_eq!(b.min_horizon(), Some(1));
        let b = HorizonBound {
            n_min: f64::INFINITY,
            formula: HorizonFormula::Eq8,
        };
        assert_eq!(b.min_horizon(), None);
    }
}
