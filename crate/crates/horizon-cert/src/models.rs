//! Built-in plants: a chain of masses connected by springs and dampers,
//! and the nonlinear four-tank process.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{expm, Mat, Vector};
use crate::system::{LinearSystem, Model};

/// Zero-order-hold discretization of ẋ = A_c x + B_c u over a step h,
/// read off the exponential of the augmented block [[A_c, B_c], [0, 0]]·h.
pub fn exact_discretization(a_c: &Mat, b_c: &Mat, h: f64) -> Result<(Mat, Mat)> {
    if !(h > 0.0) {
        return domain("sampling time must be positive");
    }
    let (n, m) = (a_c.nrows(), b_c.ncols());
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a_c);
    aug.view_mut((0, n), (n, m)).copy_from(b_c);
    let e = expm(&(aug * h))?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Continuous-time chain of `l` masses with state [z_1, ż_1, ..., z_L, ż_L].
/// The first mass is tied to a wall, the force acts on the last mass.
pub fn msd_chain_continuous(l: usize, mass: f64, k: f64, d: f64) -> Result<(Mat, Mat)> {
    if l < 1 {
        return domain("chain needs at least one mass");
    }
    if !(mass > 0.0) || k < 0.0 || d < 0.0 {
        return domain("mass must be positive, spring and damper non-negative");
    }
    let n = 2 * l;
    let mut a = Mat::zeros(n, n);
    let mut couple = |i: usize, j: Option<usize>| {
        let (pi, vi) = (2 * i, 2 * i + 1);
        a[(vi, pi)] -= k / mass;
        a[(vi, vi)] -= d / mass;
        if let Some(j) = j {
            a[(vi, 2 * j)] += k / mass;
            a[(vi, 2 * j + 1)] += d / mass;
        }
    };
    for i in 0..l {
        couple(i, if i == 0 { None } else { Some(i - 1) });
        if i + 1 < l {
            couple(i, Some(i + 1));
        }
    }
    for i in 0..l {
        a[(2 * i, 2 * i + 1)] = 1.0;
    }
    let mut b = Mat::zeros(n, 1);
    b[(n - 1, 0)] = 1.0 / mass;
    Ok((a, b))
}

/// Discretized chain with output z_1 and input box [−1, 1].
pub fn msd_chain_model(l: usize, mass: f64, k: f64, d: f64, h: f64) -> Result<LinearSystem> {
    let (a_c, b_c) = msd_chain_continuous(l, mass, k, d)?;
    let (a, b) = exact_discretization(&a_c, &b_c, h)?;
    let mut c = Mat::zeros(1, 2 * l);
    c[(0, 0)] = 1.0;
    LinearSystem::new(
        a,
        b,
        c,
        Vector::from_element(1, -1.0),
        Vector::from_element(1, 1.0),
    )
}

/// Four-tank coefficients. The defaults are placeholders: tank area
/// 50.27 cm², outlet areas 0.233 and 0.242 cm², valve split 0.35, inputs
/// in units of 10 ml/s with u_s = (5, 5) and U = [0, 10]².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourTankParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c12: f64,
    pub c34: f64,
    pub c1u: f64,
    pub c2u: f64,
    pub c3u: f64,
    pub c4u: f64,
    pub sample_time: f64,
    pub substeps: usize,
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub u_s: [f64; 2],
}

impl Default for FourTankParams {
    fn default() -> Self {
        let (area, grav, split, unit) = (50.27, 981.0_f64, 0.35, 10.0);
        let s = (2.0 * grav).sqrt();
        let (c13, c24) = (0.233 * s / area, 0.242 * s / area);
        Self {
            c1: c13,
            c2: c24,
            c3: c13,
            c4: c24,
            c12: c24,
            c34: c24,
            c1u: unit * split / area,
            c2u: unit * (1.0 - split) / area,
            c3u: unit * split / area,
            c4u: unit * (1.0 - split) / area,
            sample_time: 3.0,
            substeps: 1,
            u_min: [0.0, 0.0],
            u_max: [10.0, 10.0],
            u_s: [5.0, 5.0],
        }
    }
}

impl FourTankParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c1,
            self.c2,
            self.c3,
            self.c4,
            self.c12,
            self.c34,
            self.c1u,
            self.c2u,
            self.c3u,
            self.c4u,
            self.sample_time,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return domain("four-tank coefficients and sampling time must be positive");
        }
        if self.substeps == 0 {
            return domain("at least one integration substep");
        }
        if (0..2).any(|i| !(self.u_min[i] <= self.u_s[i] && self.u_s[i] <= self.u_max[i])) {
            return domain("setpoint input outside the input box");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourTank {
    pub params: FourTankParams,
    pub x_s: Vector,
    pub u_s: Vector,
    u_min: Vector,
    u_max: Vector,
}

/// √max(x, 0) and a guarded derivative.
fn root(x: f64) -> (f64, f64) {
    let xc = x.max(0.0);
    let r = xc.sqrt();
    let dr = if x > 0.0 { 0.5 / r.max(1e-6) } else { 0.0 };
    (r, dr)
}

impl FourTank {
    pub fn new(params: FourTankParams) -> Result<Self> {
        params.validate()?;
        let p = &params;
        let [u1, u2] = p.u_s;
        let x2 = (p.c2u * u2 / p.c2).powi(2);
        let x4 = (p.c4u * u1 / p.c4).powi(2);
        let x1 = ((p.c12 * x2.sqrt() + p.c1u * u1) / p.c1).powi(2);
        let x3 = ((p.c34 * x4.sqrt() + p.c3u * u2) / p.c3).powi(2);
        Ok(Self {
            x_s: Vector::from_vec(vec![x1, x2, x3, x4]),
            u_s: Vector::from_vec(p.u_s.to_vec()),
            u_min: Vector::from_vec(p.u_min.to_vec()),
            u_max: Vector::from_vec(p.u_max.to_vec()),
            params,
        })
    }

    /// Output map selecting the levels of tanks 1 and 3.
    pub fn output_matrix() -> Mat {
        Mat::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    /// Continuous vector field with ∂/∂x and ∂/∂u.
    pub fn vector_field(&self, x: &Vector, u: &Vector) -> (Vector, Mat, Mat) {
        let p = &self.params;
        let (r1, d1) = root(x[0]);
        let (r2, d2) = root(x[1]);
        let (r3, d3) = root(x[2]);
        let (r4, d4) = root(x[3]);
        let f = Vector::from_vec(vec![
            -p.c1 * r1 + p.c12 * r2 + p.c1u * u[0],
            -p.c2 * r2 + p.c2u * u[1],
            -p.c3 * r3 + p.c34 * r4 + p.c3u * u[1],
            -p.c4 * r4 + p.c4u * u[0],
        ]);
        let mut fx = Mat::zeros(4, 4);
        fx[(0, 0)] = -p.c1 * d1;
        fx[(0, 1)] = p.c12 * d2;
        fx[(1, 1)] = -p.c2 * d2;
        fx[(2, 2)] = -p.c3 * d3;
        fx[(2, 3)] = p.c34 * d4;
        fx[(3, 3)] = -p.c4 * d4;
        let mut fu = Mat::zeros(4, 2);
        fu[(0, 0)] = p.c1u;
        fu[(1, 1)] = p.c2u;
        fu[(2, 1)] = p.c3u;
        fu[(3, 0)] = p.c4u;
        (f, fx, fu)
    }

    /// One classical Runge-Kutta step of length h with sensitivities.
    pub fn rk4_step(&self, x: &Vector, u: &Vector, h: f64) -> (Vector, Mat, Mat) {
        let id = Mat::identity(4, 4);
        let (k1, a1, b1) = self.vector_field(x, u);
        let z1x = id.clone();
        let k1x = &a1 * &z1x;
        let k1u = b1;

        let z2 = x + &k1 * (h / 2.0);
        let z2x = &id + &k1x * (h / 2.0);
        let z2u = &k1u * (h / 2.0);
        let (k2, a2, b2) = self.vector_field(&z2, u);
        let k2x = &a2 * &z2x;
        let k2u = &a2 * &z2u + b2;

        let z3 = x + &k2 * (h / 2.0);
        let z3x = &id + &k2x * (h / 2.0);
        let z3u = &k2u * (h / 2.0);
        let (k3, a3, b3) = self.vector_field(&z3, u);
        let k3x = &a3 * &z3x;
        let k3u = &a3 * &z3u + b3;

        let z4 = x + &k3 * h;
        let z4x = &id + &k3x * h;
        let z4u = &k3u * h;
        let (k4, a4, b4) = self.vector_field(&z4, u);
        let k4x = &a4 * &z4x;
        let k4u = &a4 * &z4u + b4;

        let w = h / 6.0;
        let next = x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * w;
        let jx = &id + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * w;
        let ju = (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * w;
        (next, jx, ju)
    }
}

impl Model for FourTank {
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &Vector, u: &Vector) -> Vector {
        self.step_with_jacobians(x, u).0
    }
    fn step_with_jacobians(&self, x: &Vector, u: &Vector) -> (Vector, Mat, Mat) {
        let s = self.params.substeps;
        let h = self.params.sample_time / s as f64;
        let (mut xk, mut jx, mut ju) = self.rk4_step(x, u, h);
        for _ in 1..s {
            let (xn, ax, au) = self.rk4_step(&xk, u, h);
            ju = &ax * ju + au;
            jx = ax * jx;
            xk = xn;
        }
        (xk, jx, ju)
    }
    fn input_lower(&self) -> &Vector {
        &self.u_min
    }
    fn input_upper(&self) -> &Vector {
        &self.u_max
    }
}

pub fn four_tank_model(params: FourTankParams) -> Result<FourTank> {
    FourTank::new(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;

    #[test]
    fn zero_dynamics_discretize_to_identity() {
        let b_c = Mat::from_row_slice(2, 1, &[1.0, 2.0]);
        let (a, b) = exact_discretization(&Mat::zeros(2, 2), &b_c, 0.5).unwrap();
        assert!((a - Mat::identity(2, 2)).norm() < 1e-15);
        assert!((b - &b_c * 0.5).norm() < 1e-15);
        let (a, _) = exact_discretization(
            &Mat::from_element(1, 1, -1.0),
            &Mat::from_element(1, 1, 1.0),
            1.0,
        )
        .unwrap();
        assert!((a[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_mass_eigenvalues() {
        let (m, k, d) = (1.0, 10.0, 2.0);
        let (a, _) = msd_chain_continuous(1, m, k, d).unwrap();
        // roots of m s² + d s + k
        let disc: f64 = d * d - 4.0 * m * k;
        let (re, im) = (-d / (2.0 * m), (-disc).sqrt() / (2.0 * m));
        let ev = a.complex_eigenvalues();
        for z in ev.iter() {
            assert!((z.re - re).abs() < 1e-12 && (z.im.abs() - im).abs() < 1e-12);
        }
    }

    #[test]
    fn undamped_chain_is_marginal() {
        let sys = msd_chain_model(3, 1.0, 10.0, 0.0, 1.0).unwrap();
        assert!((spectral_radius(&sys.a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn semigroup_property() {
        let (a_c, b_c) = msd_chain_continuous(6, 1.0, 10.0, 2.0).unwrap();
        let (a1, _) = exact_discretization(&a_c, &b_c, 1.0).unwrap();
        let (ah, _) = exact_discretization(&a_c, &b_c, 0.5).unwrap();
        assert!((&ah * &ah - a1).norm() < 1e-10);
    }

    #[test]
    fn four_tank_setpoint_is_equilibrium() {
        let t = FourTank::new(FourTankParams::default()).unwrap();
        let (f, _, _) = t.vector_field(&t.x_s, &t.u_s);
        assert!(f.norm() < 1e-12);
        let next = t.step(&t.x_s, &t.u_s);
        assert!((next - &t.x_s).norm() < 1e-10);
    }

    #[test]
    fn four_tank_jacobians_match_differences() {
        let t = FourTank::new(FourTankParams::default()).unwrap();
        let x = &t.x_s + Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let u = Vector::from_vec(vec![3.0, 7.0]);
        let (_, jx, ju) = t.step_with_jacobians(&x, &u);
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let col = (t.step(&xp, &u) - t.step(&xm, &u)) / (2.0 * h);
            assert!((col - jx.column(i)).norm() < 1e-6);
        }
        for i in 0..2 {
            let mut up = u.clone();
            let mut um = u.clone();
            up[i] += h;
            um[i] -= h;
            let col = (t.step(&x, &up) - t.step(&x, &um)) / (2.0 * h);
            assert!((col - ju.column(i)).norm() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = FourTankParams {
            c1: -1.0,
            ..FourTankParams::default()
        };
        assert!(FourTank::new(p).is_err());
        assert!(msd_chain_model(0, 1.0, 1.0, 1.0, 1.0).is_err());
    }
}
