//! Product-sum identities behind the closed-form indices, exposed so that
//! they can be checked numerically. `delta[l-1]` holds δ_l for l = 1..=N.

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

fn check_delta<T: Scalar>(delta: &[T], n: usize) -> Result<()> {
    if delta.len() < n {
        return Err(Error::Dimension(format!(
            "need {n} deltas, have {}",
            delta.len()
        )));
    }
    if delta[..n].iter().any(|&d| d + T::one() == T::zero()) {
        return domain("delta_l + 1 must be nonzero");
    }
    Ok(())
}

/// ∏_{l=0}^{k-2} (η + δ_{N-l}) / (1 + δ_{N-l-1}).
fn prod<T: Scalar>(eta: T, d: impl Fn(usize) -> T, n: usize, k: usize) -> T {
    (0..k.saturating_sub(1)).fold(T::one(), |p, l| {
        p * (eta + d(n - l)) / (T::one() + d(n - l - 1))
    })
}

/// (δ_{N-j+1} − η δ_{N-j}) / (1 + δ_{N-j}) times the product up to j.
fn term<T: Scalar>(eta: T, d: &impl Fn(usize) -> T, n: usize, j: usize) -> T {
    (d(n - j + 1) - eta * d(n - j)) / (T::one() + d(n - j)) * prod(eta, d, n, j)
}

/// Absolute residuals of the two telescoping identities at index k.
pub fn lemma1_residuals<T: Scalar>(eta: T, delta: &[T], k: usize, n: usize) -> Result<(T, T)> {
    if n < 2 || k < 1 || k > n - 1 {
        return domain("need 1 <= k <= N-1");
    }
    check_delta(delta, n)?;
    let d = |l: usize| delta[l - 1];
    let mut lhs_a = T::zero();
    let mut lhs_b = T::zero();
    for j in 1..k {
        let t = term(eta, &d, n, j);
        lhs_a = lhs_a + t;
        lhs_b = lhs_b + eta.powi((k - 1 - j) as i32) * t;
    }
    let p = prod(eta, d, n, k);
    let rhs_a = d(n) - d(n - k + 1) * p;
    let rhs_b = p - eta.powi((k - 1) as i32);
    Ok(((lhs_a - rhs_a).abs(), (lhs_b - rhs_b).abs()))
}

/// Coefficients a_1..a_{N-1} of the worst-case stage costs
/// ℓ̃_k = a_k (ℓ̃_0 + η).
pub fn lemma2_coefficients<T: Scalar>(eta: T, delta: &[T], n: usize) -> Result<Vec<T>> {
    if n == 0 {
        return domain("N must be at least 1");
    }
    check_delta(delta, n)?;
    let d = |l: usize| delta[l - 1];
    Ok((1..n).map(|k| term(eta, &d, n, k)).collect())
}

/// ā_N = δ_1 ∏_{j=0}^{N-2} (η + δ_{N-j}) / (1 + δ_{N-j-1}), so that
/// Σ a_k = δ_N − ā_N.
pub fn lemma2_abar<T: Scalar>(eta: T, delta: &[T], n: usize) -> Result<T> {
    if n == 0 {
        return domain("N must be at least 1");
    }
    check_delta(delta, n)?;
    let d = |l: usize| delta[l - 1];
    Ok(d(1) * prod(eta, d, n, n))
}

/// Residuals of the linear system the coefficients solve, for k = 2..=N:
/// (δ_N − δ_{N-k+1} η^{k-1})(ℓ̃_0 + η) − Σ_{j=1}^{k-1} (1 + δ_{N-k+1} η^{k-1-j}) ℓ̃_j.
pub fn lemma2_residuals<T: Scalar>(eta: T, delta: &[T], n: usize, l0: T) -> Result<Vec<T>> {
    let a = lemma2_coefficients(eta, delta, n)?;
    let d = |l: usize| delta[l - 1];
    let lt: Vec<T> = a.iter().map(|&ak| ak * (l0 + eta)).collect();
    Ok((2..=n)
        .map(|k| {
            let dk = d(n - k + 1);
            let lhs = (d(n) - dk * eta.powi((k - 1) as i32)) * (l0 + eta);
            let rhs = (1..k).fold(T::zero(), |s, j| {
                s + (T::one() + dk * eta.powi((k - 1 - j) as i32)) * lt[j - 1]
            });
            (lhs - rhs).abs()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_case_is_exact() {
        let d = [0.3, 1.7, 2.2];
        assert_eq!(lemma1_residuals(0.4, &d, 1, 3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn small_case_by_hand() {
        // N = 3, k = 2: sum has the single term (δ_3 − η δ_2)/(1+δ_2).
        let (eta, d) = (0.25_f64, [1.0, 2.0, 3.0]);
        let t: f64 = (3.0 - eta * 2.0) / 3.0;
        let p = (eta + 3.0) / (1.0 + 2.0);
        assert!((t - (3.0 - 2.0 * p)).abs() < 1e-15);
        assert!((t - (p - eta)).abs() < 1e-15);
        let (ra, rb) = lemma1_residuals(eta, &d, 2, 3).unwrap();
        assert!(ra < 1e-15 && rb < 1e-15);
    }

    #[test]
    fn eta_zero_reduces_to_product() {
        let d = [0.5, 1.5, 2.5, 3.5];
        let (_, rb) = lemma1_residuals(0.0, &d, 3, 4).unwrap();
        assert!(rb < 1e-14);
    }

    #[test]
    fn coefficients_sum_to_gamma_minus_abar() {
        let g = 2.5;
        let d = vec![g; 7];
        let a = lemma2_coefficients(0.3, &d, 7).unwrap();
        let abar = lemma2_abar(0.3, &d, 7).unwrap();
        let s: f64 = a.iter().sum();
        assert!((s - (g - abar)).abs() < 1e-13);
        assert!(lemma2_coefficients(0.3, &d, 1).unwrap().is_empty());
    }

    #[test]
    fn index_errors() {
        let d = [1.0, 2.0];
        assert!(lemma1_residuals(0.5, &d, 2, 2).is_err());
        assert!(lemma1_residuals(0.5, &d, 1, 3).is_err());
        assert!(lemma2_coefficients(0.5, &[-1.0, 2.0], 2).is_err());
    }
}
