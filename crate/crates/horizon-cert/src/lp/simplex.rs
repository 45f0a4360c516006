use std::cmp::Ordering;

use super::{DenseLp, LpSolution, LpStatus};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions<T> {
    /// Phase-1 residual above which the program is declared infeasible.
    pub feas_tol: T,
    /// Reduced-cost threshold for optimality.
    pub opt_tol: T,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: T,
    /// Post-solve tolerance on scaled constraint violations.
    pub verify_tol: T,
    /// `None` selects 10·(rows+cols)².
    pub max_iters: Option<usize>,
}

impl<T: Scalar> Default for SimplexOptions<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            feas_tol: T::lit(1e-9).max(eps * T::lit(1e4)),
            opt_tol: T::lit(1e-9).max(eps * T::lit(1e4)),
            pivot_tol: T::lit(1e-11).max(eps * T::lit(1e2)),
            verify_tol: T::lit(1e-8).max(eps * T::lit(1e5)),
            max_iters: None,
        }
    }
}

pub fn solve_lp<T: Scalar>(lp: &DenseLp<T>, max_iters: Option<usize>) -> Result<LpSolution<T>> {
    solve_lp_with(
        lp,
        &SimplexOptions {
            max_iters,
            ..SimplexOptions::default()
        },
    )
}

#[derive(Clone, Copy)]
enum Col {
    Shifted(usize),
    Free(usize, usize),
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    /// Rows as first built, kept to refactor the basis.
    orig: Vec<Vec<T>>,
    basis: Vec<usize>,
    /// Initial identity basis; those columns of the tableau hold B^{-1}.
    init: Vec<usize>,
    ncols: usize,
}

/// Pivots between refactorizations of the tableau.
const REINVERT_EVERY: usize = 32;

impl<T: Scalar> Tableau<T> {
    fn rhs(&self, i: usize) -> T {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v = *v / p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != T::zero() {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = *v - f * *pv;
                }
                row[c] = T::zero();
            }
        }
        self.basis[r] = c;
    }

    /// Rebuilds the tableau as B^{-1} times the original rows by Gaussian
    /// elimination with partial pivoting. Keeps the current tableau when
    /// the basis matrix looks singular.
    fn reinvert(&mut self, pivot_tol: T) {
        let m = self.rows.len();
        let width = self.ncols + 1;
        // Augmented [B | orig], eliminated in place.
        let mut work: Vec<Vec<T>> = (0..m)
            .map(|i| {
                let mut r: Vec<T> = self.basis.iter().map(|&b| self.orig[i][b]).collect();
                r.extend_from_slice(&self.orig[i]);
                r
            })
            .collect();
        for k in 0..m {
            let Some(p) = (k..m).max_by(|&a, &b| {
                work[a][k]
                    .abs()
                    .partial_cmp(&work[b][k].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            }) else {
                return;
            };
            if !(work[p][k].abs() > pivot_tol) {
                return;
            }
            work.swap(k, p);
            let d = work[k][k];
            for v in work[k].iter_mut() {
                *v = *v / d;
            }
            let prow = work[k].clone();
            for (i, row) in work.iter_mut().enumerate() {
                if i == k || row[k] == T::zero() {
                    continue;
                }
                let f = row[k];
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = *v - f * *pv;
                }
            }
        }
        for (k, row) in work.into_iter().enumerate() {
            let mut r = row[m..m + width].to_vec();
            r[self.basis[k]] = T::one();
            self.rows[k] = r;
        }
        for k in 0..m {
            let b = self.basis[k];
            for (i, row) in self.rows.iter_mut().enumerate() {
                if i != k {
                    row[b] = T::zero();
                }
            }
        }
    }

    /// Lexicographic comparison of the rows of B^{-1} scaled by the pivot
    /// column, which never revisits a basis among degenerate pivots.
    fn lex_cmp(&self, a: usize, b: usize, c: usize, tol: T) -> Ordering {
        let (pa, pb) = (self.rows[a][c], self.rows[b][c]);
        for &j in &self.init {
            let (va, vb) = (self.rows[a][j] / pa, self.rows[b][j] / pb);
            if (va - vb).abs() > tol * (T::one() + va.abs().max(vb.abs())) {
                return va.partial_cmp(&vb).unwrap_or(Ordering::Equal);
            }
        }
        Ordering::Equal
    }

    fn reduced_costs(&self, cost: &[T]) -> Vec<T> {
        let mut r = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != T::zero() {
                for (rj, aij) in r.iter_mut().zip(&self.rows[i]) {
                    *rj = *rj - cb * *aij;
                }
            }
        }
        r
    }

    /// Runs simplex iterations with Dantzig pricing and a largest-pivot
    /// tie break, switching to Bland's rule for the rest of the phase after
    /// a run of degenerate pivots. With a `target`, the phase also ends once
    /// the objective drops to it. Returns Some(status) when the phase ends
    /// without reaching optimality.
    fn optimize(
        &mut self,
        cost: &[T],
        allowed: &[bool],
        opts: &SimplexOptions<T>,
        iters: &mut usize,
        cap: usize,
        target: Option<T>,
    ) -> Option<LpStatus> {
        let mut stalled = 0usize;
        let mut bland = false;
        loop {
            if let Some(t) = target {
                let value = (0..self.rows.len())
                    .fold(T::zero(), |s, i| s + cost[self.basis[i]] * self.rhs(i));
                if value <= t {
                    return None;
                }
            }
            bland |= stalled >= BLAND_AFTER;
            let rc = self.reduced_costs(cost);
            let candidates = (0..self.ncols).filter(|&j| allowed[j] && rc[j] < -opts.opt_tol);
            let entering = if bland {
                candidates.min()
            } else {
                candidates.min_by(|&a, &b| rc[a].partial_cmp(&rc[b]).unwrap_or(Ordering::Equal))
            };
            let Some(c) = entering else { return None };
            if *iters >= cap {
                return Some(LpStatus::IterationLimit);
            }
            let col_scale = self
                .rows
                .iter()
                .fold(T::zero(), |s, row| s.max(row[c].abs()));
            let tol = opts.pivot_tol.max(opts.pivot_tol * col_scale);
            let ratio = |i: usize| self.rhs(i).max(T::zero()) / self.rows[i][c];
            let eligible: Vec<usize> = (0..self.rows.len())
                .filter(|&i| self.rows[i][c] > tol)
                .collect();
            let Some(theta) = eligible.iter().map(|&i| ratio(i)).reduce(T::min) else {
                return Some(LpStatus::Unbounded);
            };
            let slack = opts.feas_tol * (T::one() + theta);
            let tied = eligible.into_iter().filter(|&i| ratio(i) <= theta + slack);
            let r = if bland {
                tied.min_by_key(|&i| self.basis[i])
            } else if stalled >= LEX_AFTER {
                tied.min_by(|&a, &b| self.lex_cmp(a, b, c, opts.feas_tol))
            } else {
                tied.max_by(|&a, &b| {
                    self.rows[a][c]
                        .partial_cmp(&self.rows[b][c])
                        .unwrap_or(Ordering::Equal)
                })
            }
            .expect("minimum ratio row is tied with itself");
            stalled = if theta > opts.feas_tol {
                0
            } else {
                stalled + 1
            };
            self.pivot(r, c);
            *iters += 1;
            if *iters % REINVERT_EVERY == 0 {
                self.reinvert(opts.pivot_tol);
            }
        }
    }
}

/// Consecutive degenerate pivots before switching the ratio test to the
/// lexicographic rule, and before falling back to Bland's rule.
const LEX_AFTER: usize = 50;
const BLAND_AFTER: usize = 5_000;

pub fn solve_lp_with<T: Scalar>(
    lp: &DenseLp<T>,
    opts: &SimplexOptions<T>,
) -> Result<LpSolution<T>> {
    lp.validate()?;
    let n = lp.num_vars();

    // Map original variables onto non-negative columns.
    let mut cols = Vec::with_capacity(n);
    let mut nstruct = 0;
    for l in &lp.lower {
        if l.is_finite() {
            cols.push(Col::Shifted(nstruct));
            nstruct += 1;
        } else {
            cols.push(Col::Free(nstruct, nstruct + 1));
            nstruct += 2;
        }
    }
    let expand = |row: &[T], b: T| -> (Vec<T>, T) {
        let mut out = vec![T::zero(); nstruct];
        let mut rhs = b;
        for (j, &a) in row.iter().enumerate() {
            match cols[j] {
                Col::Shifted(c) => {
                    out[c] = a;
                    rhs = rhs - a * lp.lower[j];
                }
                Col::Free(p, m) => {
                    out[p] = a;
                    out[m] = -a;
                }
            }
        }
        (out, rhs)
    };

    let n_ub = lp.a_ub.len();
    let m = lp.num_rows();
    // Rows needing an artificial start variable.
    let mut rows_raw = Vec::with_capacity(m);
    let mut needs_art = Vec::with_capacity(m);
    for (i, (row, &b)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
        let (mut r, mut rhs) = expand(row, b);
        let mut slack = T::one();
        if rhs < T::zero() {
            r.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
            slack = -T::one();
        }
        needs_art.push(slack < T::zero());
        rows_raw.push((r, Some((i, slack)), rhs));
    }
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let (mut r, mut rhs) = expand(row, b);
        if rhs < T::zero() {
            r.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
        }
        needs_art.push(true);
        rows_raw.push((r, None, rhs));
    }
    let n_art = needs_art.iter().filter(|&&a| a).count();
    let art0 = nstruct + n_ub;
    let ncols = art0 + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = art0;
    for (i, (r, slack, rhs)) in rows_raw.into_iter().enumerate() {
        let mut full = vec![T::zero(); ncols + 1];
        full[..nstruct].copy_from_slice(&r);
        if let Some((si, sv)) = slack {
            full[nstruct + si] = sv;
        }
        full[ncols] = rhs;
        if needs_art[i] {
            full[next_art] = T::one();
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(nstruct + slack.map(|s| s.0).unwrap_or(0));
        }
        rows.push(full);
    }
    let mut tab = Tableau {
        orig: rows.clone(),
        rows,
        init: basis.clone(),
        basis,
        ncols,
    };

    let cap = opts.max_iters.unwrap_or(10 * (m + n) * (m + n)).max(1);
    let mut iters = 0usize;
    let bscale = lp
        .b_ub
        .iter()
        .chain(&lp.b_eq)
        .fold(T::one(), |s, b| s.max(b.abs()));

    if n_art > 0 {
        let mut cost1 = vec![T::zero(); ncols];
        for c in cost1.iter_mut().skip(art0) {
            *c = T::one();
        }
        let allowed = vec![true; ncols];
        // Stop as soon as the artificials vanish: the remaining phase-1
        // pivots would only wander over a degenerate face.
        let target = opts.feas_tol * bscale;
        if let Some(status) = tab.optimize(&cost1, &allowed, opts, &mut iters, cap, Some(target)) {
            // Phase 1 is bounded below by zero, so only the cap can stop it.
            return Ok(no_solution(status, n, iters));
        }
        let infeas = (0..tab.rows.len())
            .filter(|&i| tab.basis[i] >= art0)
            .fold(T::zero(), |s, i| s + tab.rhs(i));
        if infeas > opts.feas_tol * bscale {
            return Ok(no_solution(LpStatus::Infeasible, n, iters));
        }
        // Drive remaining artificials out of the basis, dropping rows that
        // turn out to be redundant.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art0 {
                let pivot_col = (0..art0)
                    .filter(|&j| tab.rows[i][j].abs() > opts.pivot_tol)
                    .max_by(|&a, &b| {
                        tab.rows[i][a]
                            .abs()
                            .partial_cmp(&tab.rows[i][b].abs())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                match pivot_col {
                    Some(j) => {
                        tab.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.orig.remove(i);
                        tab.basis.remove(i);
                        tab.init.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut cost2 = vec![T::zero(); ncols];
    for (j, c) in cols.iter().enumerate() {
        match *c {
            Col::Shifted(k) => cost2[k] = lp.objective[j],
            Col::Free(p, q) => {
                cost2[p] = lp.objective[j];
                cost2[q] = -lp.objective[j];
            }
        }
    }
    tab.reinvert(opts.pivot_tol);
    let allowed: Vec<bool> = (0..ncols).map(|j| j < art0).collect();
    if let Some(status) = tab.optimize(&cost2, &allowed, opts, &mut iters, cap, None) {
        return Ok(no_solution(status, n, iters));
    }

    tab.reinvert(opts.pivot_tol);
    let mut y = vec![T::zero(); ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let primal: Vec<T> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| match *c {
            Col::Shifted(k) => lp.lower[j] + y[k],
            Col::Free(p, q) => y[p] - y[q],
        })
        .collect();
    let viol = lp.max_violation(&primal);
    if viol > opts.verify_tol {
        return Err(Error::LpVerification(viol.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&primal),
        primal,
        iterations: iters,
    })
}

fn no_solution<T: Scalar>(status: LpStatus, n: usize, iterations: usize) -> LpSolution<T> {
    let objective = match status {
        LpStatus::Unbounded => T::neg_infinity(),
        _ => T::nan(),
    };
    LpSolution {
        status,
        objective,
        primal: vec![T::nan(); n],
        iterations,
    }
}
