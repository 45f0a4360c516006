use super::{solve_lp, DenseLp, LpSolution, LpStatus};
use crate::bounds::{Method, SuboptimalityResult};
use crate::constants::{require_len, CertificationConstants, TerminalConstants};
use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// Column positions of the worst-case program without terminal cost:
/// ℓ̃_0..ℓ̃_{N-1}, W̃_0..W̃_N, σ̃_0..σ̃_N, Ṽ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lp6Layout {
    pub n: usize,
}

impl Lp6Layout {
    pub fn ell(&self, k: usize) -> usize {
        k
    }
    pub fn storage(&self, k: usize) -> usize {
        self.n + k
    }
    pub fn sigma(&self, k: usize) -> usize {
        2 * self.n + 1 + k
    }
    pub fn value(&self) -> usize {
        3 * self.n + 2
    }
    pub fn num_vars(&self) -> usize {
        3 * self.n + 3
    }
}

/// Same columns as [`Lp6Layout`] followed by Ṽ_f.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lp12Layout {
    pub base: Lp6Layout,
}

impl Lp12Layout {
    pub fn terminal(&self) -> usize {
        self.base.num_vars()
    }
    pub fn num_vars(&self) -> usize {
        self.base.num_vars() + 1
    }
}

fn names(n: usize, terminal: bool) -> Vec<String> {
    let mut v: Vec<String> = (0..n).map(|k| format!("l{k}")).collect();
    v.extend((0..=n).map(|k| format!("w{k}")));
    v.extend((0..=n).map(|k| format!("s{k}")));
    v.push("v".into());
    if terminal {
        v.push("vf".into());
    }
    v
}

/// Shared rows; `gam(k)` returns the controllability constant γ_k used in
/// the tail and candidate rows, `vf` the terminal column if any.
fn base_program<T: Scalar>(
    c: &CertificationConstants<T>,
    n: usize,
    gam: impl Fn(usize) -> T,
    vf: Option<usize>,
) -> DenseLp<T> {
    let lay = Lp6Layout { n };
    let mut lp = DenseLp::new(names(n, vf.is_some()));
    lp.set_free(lay.value());
    for k in 1..n {
        lp.objective[lay.ell(k)] = T::one();
    }
    lp.objective[lay.value()] = -T::one();
    if let Some(f) = vf {
        lp.objective[f] = T::one();
    }

    let mut row = lp.zero_row();
    row[lay.sigma(0)] = T::one();
    lp.add_eq(row, T::one());

    for k in 0..=n {
        let mut lo = lp.zero_row();
        lo[lay.sigma(k)] = c.gamma_o_lower;
        lo[lay.storage(k)] = -T::one();
        lp.add_le(lo, T::zero());
        let mut hi = lp.zero_row();
        hi[lay.storage(k)] = T::one();
        hi[lay.sigma(k)] = -c.gamma_o_upper;
        lp.add_le(hi, T::zero());
    }
    for k in 0..n {
        let mut d = lp.zero_row();
        d[lay.storage(k + 1)] = T::one();
        d[lay.storage(k)] = -T::one();
        d[lay.sigma(k)] = c.eps_o;
        d[lay.ell(k)] = -T::one();
        lp.add_le(d, T::zero());
    }
    for k in 0..n {
        let mut tail = lp.zero_row();
        for j in k..n {
            tail[lay.ell(j)] = T::one();
        }
        if let Some(f) = vf {
            tail[f] = T::one();
        }
        tail[lay.sigma(k)] = -gam(n - k);
        lp.add_le(tail, T::zero());
    }
    for k in 1..=n {
        let mut cand = lp.zero_row();
        cand[lay.value()] = T::one();
        for j in 1..k {
            cand[lay.ell(j)] = -T::one();
        }
        cand[lay.sigma(k)] = -gam(n - k + 1);
        lp.add_le(cand, T::zero());
    }
    lp
}

/// Worst-case program without terminal cost.
pub fn build_lp6<T: Scalar>(c: &CertificationConstants<T>, n: usize) -> Result<DenseLp<T>> {
    if n == 0 {
        return domain("horizon must be at least 1");
    }
    c.require_len(n)?;
    Ok(base_program(c, n, |k| c.gamma[k - 1], None))
}

/// Worst-case program with terminal cost. When the terminal cost has no
/// control-Lyapunov property (ε_f = ∞) or vanishes identically (c̄_f = 0),
/// the relaxed-decrease row is omitted and the program coincides with the
/// one without terminal cost.
pub fn build_lp12<T: Scalar>(
    c: &CertificationConstants<T>,
    t: &TerminalConstants<T>,
    n: usize,
) -> Result<DenseLp<T>> {
    if n == 0 {
        return domain("horizon must be at least 1");
    }
    t.validate()?;
    require_len(&t.gamma_f, n)?;
    let lay = Lp12Layout {
        base: Lp6Layout { n },
    };
    let vf = lay.terminal();
    let mut lp = base_program(c, n, |k| t.gamma_f[k - 1], Some(vf));
    let b = lay.base;
    if !t.is_clf_free() && !t.is_zero() {
        let mut row = lp.zero_row();
        row[b.value()] = T::one();
        for j in 1..n {
            row[b.ell(j)] = -T::one();
        }
        row[vf] = -(T::one() + t.eps_f.max(T::zero()));
        lp.add_le(row, T::zero());
    }
    let mut lo = lp.zero_row();
    lo[b.sigma(n)] = t.c_f_lower;
    lo[vf] = -T::one();
    lp.add_le(lo, T::zero());
    let mut hi = lp.zero_row();
    hi[vf] = T::one();
    hi[b.sigma(n)] = -t.c_f_upper;
    lp.add_le(hi, T::zero());
    Ok(lp)
}

/// α = 1 + optimum/ε_o. An unbounded program means the index is −∞.
pub fn alpha_from_lp<T: Scalar>(
    sol: &LpSolution<T>,
    eps_o: T,
    method: Method,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    match sol.status {
        LpStatus::Optimal => Ok(SuboptimalityResult::new(
            T::one() + sol.objective / eps_o,
            n,
            method,
        )),
        LpStatus::Unbounded => Ok(SuboptimalityResult::vacuous(n, method)),
        s => Err(Error::LpStatus(format!(
            "{s:?} after {} iterations",
            sol.iterations
        ))),
    }
}

pub fn alpha_lp6<T: Scalar>(
    c: &CertificationConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    let sol = solve_lp(&build_lp6(c, n)?, None)?;
    alpha_from_lp(&sol, c.eps_o, Method::Lp6, n)
}

pub fn alpha_lp12<T: Scalar>(
    c: &CertificationConstants<T>,
    t: &TerminalConstants<T>,
    n: usize,
) -> Result<SuboptimalityResult<T>> {
    let sol = solve_lp(&build_lp12(c, t, n)?, None)?;
    alpha_from_lp(&sol, c.eps_o, Method::Lp12, n)
}
