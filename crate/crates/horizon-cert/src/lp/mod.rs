//! Dense linear programs, a two-phase simplex solver, and the worst-case
//! programs whose optimum is the tight suboptimality index.

mod certificate;
mod simplex;

pub use certificate::{
    alpha_from_lp, alpha_lp12, alpha_lp6, build_lp12, build_lp6, Lp12Layout, Lp6Layout,
};
pub use simplex::{solve_lp, solve_lp_with, SimplexOptions};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// min cᵀx s.t. A_ub x ≤ b_ub, A_eq x = b_eq, x ≥ lower.
/// A lower bound of −∞ marks a free variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLp<T> {
    pub objective: Vec<T>,
    pub a_ub: Vec<Vec<T>>,
    pub b_ub: Vec<T>,
    pub a_eq: Vec<Vec<T>>,
    pub b_eq: Vec<T>,
    pub lower: Vec<T>,
    pub names: Vec<String>,
}

impl<T: Scalar> DenseLp<T> {
    /// Empty program over non-negative variables with the given names.
    pub fn new(names: Vec<String>) -> Self {
        let n = names.len();
        Self {
            objective: vec![T::zero(); n],
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![T::zero(); n],
            names,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a_ub.len() + self.a_eq.len()
    }

    pub fn set_free(&mut self, j: usize) {
        self.lower[j] = T::neg_infinity();
    }

    pub fn add_le(&mut self, row: Vec<T>, b: T) {
        self.a_ub.push(row);
        self.b_ub.push(b);
    }

    pub fn add_eq(&mut self, row: Vec<T>, b: T) {
        self.a_eq.push(row);
        self.b_eq.push(b);
    }

    pub fn zero_row(&self) -> Vec<T> {
        vec![T::zero(); self.num_vars()]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.names.len() != n {
            return Err(Error::Dimension(
                "bounds or names do not match objective".into(),
            ));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(Error::Dimension(
                "row count differs from right-hand side".into(),
            ));
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row of length {} for {n} variables",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("constraint coefficient".into()));
            }
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.b_ub) || !finite(&self.b_eq) {
            return Err(Error::NonFinite("objective or right-hand side".into()));
        }
        if self.lower.iter().any(|l| l.is_nan() || *l == T::infinity()) {
            return Err(Error::NonFinite("lower bound".into()));
        }
        Ok(())
    }

    /// Largest violation of any constraint at `x`, each scaled by the
    /// magnitude of the terms in its row.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        let mut row_violation = |row: &[T], b: T, eq: bool| {
            let (mut ax, mut mag) = (T::zero(), b.abs());
            for (a, xi) in row.iter().zip(x) {
                ax = ax + *a * *xi;
                mag = mag + (*a * *xi).abs();
            }
            let r = ax - b;
            let v = if eq { r.abs() } else { r.max(T::zero()) };
            worst = worst.max(v / (T::one() + mag));
        };
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            row_violation(row, b, false);
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            row_violation(row, b, true);
        }
        for (xi, l) in x.iter().zip(&self.lower) {
            if l.is_finite() {
                worst = worst.max((*l - *xi).max(T::zero()) / (T::one() + l.abs()));
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .zip(x)
            .fold(T::zero(), |s, (c, xi)| s + *c * *xi)
    }

    /// Plain-text dump in CPLEX LP format. Columns appear in variable order.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::from("\\ columns in variable order\nMinimize\n obj:");
        push_expr(&mut out, &self.objective, &self.names);
        out.push_str("\nSubject To\n");
        for (i, (row, b)) in self.a_ub.iter().zip(&self.b_ub).enumerate() {
            let _ = write!(out, " ub{i}:");
            push_expr(&mut out, row, &self.names);
            let _ = writeln!(out, " <= {}", fmt_num(*b));
        }
        for (i, (row, b)) in self.a_eq.iter().zip(&self.b_eq).enumerate() {
            let _ = write!(out, " eq{i}:");
            push_expr(&mut out, row, &self.names);
            let _ = writeln!(out, " = {}", fmt_num(*b));
        }
        out.push_str("Bounds\n");
        for (l, name) in self.lower.iter().zip(&self.names) {
            if l.is_infinite() {
                let _ = writeln!(out, " {name} free");
            } else if *l != T::zero() {
                let _ = writeln!(out, " {name} >= {}", fmt_num(*l));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num<T: Scalar>(v: T) -> String {
    format!("{:.17e}", v.to_f64().unwrap_or(f64::NAN))
}

fn push_expr<T: Scalar>(out: &mut String, coeffs: &[T], names: &[String]) {
    let mut any = false;
    for (c, name) in coeffs.iter().zip(names) {
        if *c != T::zero() {
            let sign = if *c < T::zero() { '-' } else { '+' };
            let _ = write!(out, " {sign} {} {name}", fmt_num(c.abs()));
            any = true;
        }
    }
    if !any {
        let _ = write!(
            out,
            " 0 {}",
            names.first().map(String::as_str).unwrap_or("x")
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub objective: T,
    pub primal: Vec<T>,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_mentions_every_row() {
        let mut lp = DenseLp::<f64>::new(vec!["x".into(), "y".into()]);
        lp.objective = vec![1.0, -2.0];
        lp.add_le(vec![1.0, 1.0], 4.0);
        lp.add_eq(vec![1.0, 0.0], 1.0);
        lp.set_free(1);
        let s = lp.to_lp_format();
        assert!(s.contains("ub0:") && s.contains("eq0:") && s.contains("y free"));
        assert!(s.starts_with("\\"));
    }

    #[test]
    fn validate_catches_shape_errors() {
        let mut lp = DenseLp::<f64>::new(vec!["x".into()]);
        lp.add_le(vec![1.0, 2.0], 1.0);
        assert!(lp.validate().is_err());
    }
}
