//! Dense linear-algebra kernels on `nalgebra` matrices: symmetric and
//! generalized eigenvalues, the matrix exponential, and the Lyapunov and
//! Riccati recursions used for constants and storage functions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &Mat, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(m.nrows())
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Eigenvalues are returned in ascending order with matching columns.
pub fn sym_eigen(a: &Mat) -> Result<(Vector, Mat)> {
    let n = check_square(a, "symmetric matrix")?;
    let mut m = symmetrize(a);
    let mut v = Mat::identity(n, n);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let vals = Vector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let vecs = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((vals, vecs))
}

pub fn sym_eig_max(a: &Mat) -> Result<f64> {
    let (vals, _) = sym_eigen(a)?;
    Ok(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn sym_eig_min(a: &Mat) -> Result<f64> {
    let (vals, _) = sym_eigen(a)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(p: &Mat) -> Result<Mat> {
    check_square(p, "positive definite matrix")?;
    nalgebra::Cholesky::new(symmetrize(p))
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

/// Quadratic form x'Px stored through a factor F with P = F^{-T} F^{-1},
/// so that generalized eigenvalues of (G, P) are eigenvalues of F'GF.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMeasure {
    factor: Mat,
}

impl QuadMeasure {
    /// From P itself: F = L^{-T} with P = LL'.
    pub fn from_form(p: &Mat) -> Result<Self> {
        let l = cholesky_lower(p)?;
        let n = l.nrows();
        let linv = l
            .solve_lower_triangular(&Mat::identity(n, n))
            .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        Ok(Self {
            factor: linv.transpose(),
        })
    }

    /// From S = P^{-1}: F = L_S with S = L_S L_S'. Avoids forming a badly
    /// conditioned inverse.
    pub fn from_inverse(s: &Mat) -> Result<Self> {
        Ok(Self {
            factor: cholesky_lower(s)?,
        })
    }

    /// From a positive semidefinite S ≈ P^{-1} whose spectrum spans more
    /// decades than a Cholesky factorization tolerates. Eigenvalues below
    /// `rel_floor`·λmax are raised to the floor; returns the measure of
    /// the regularized S together with its inverse P.
    pub fn from_inverse_floored(s: &Mat, rel_floor: f64) -> Result<(Self, Mat)> {
        let (vals, vecs) = sym_eigen(s)?;
        let top = vals[vals.len() - 1];
        if !(top > 0.0) || vals[0] < -1e-8 * top {
            return Err(Error::NotPositiveDefinite(format!(
                "inverse storage has eigenvalue {:.3e} against {:.3e}",
                vals[0], top
            )));
        }
        let reg = vals.map(|v| v.max(rel_floor * top));
        let factor = &vecs * Mat::from_diagonal(&reg.map(f64::sqrt));
        let p = symmetrize(&(&vecs * Mat::from_diagonal(&reg.map(|v| 1.0 / v)) * vecs.transpose()));
        Ok((Self { factor }, p))
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// The form P itself.
    pub fn form(&self) -> Mat {
        let n = self.dim();
        let finv = self
            .factor
            .clone()
            .lu()
            .solve(&Mat::identity(n, n))
            .unwrap_or_else(|| Mat::from_element(n, n, f64::NAN));
        symmetrize(&(finv.transpose() * finv))
    }

    fn whiten(&self, g: &Mat) -> Result<Mat> {
        if g.nrows() != self.dim() || g.ncols() != self.dim() {
            return Err(Error::Dimension("form and measure differ in size".into()));
        }
        Ok(symmetrize(&(self.factor.transpose() * g * &self.factor)))
    }

    /// max x'Gx / x'Px.
    pub fn gen_max(&self, g: &Mat) -> Result<f64> {
        sym_eig_max(&self.whiten(g)?)
    }

    /// min x'Gx / x'Px.
    pub fn gen_min(&self, g: &Mat) -> Result<f64> {
        sym_eig_min(&self.whiten(g)?)
    }
}

pub fn gen_eig_max(g: &Mat, p: &Mat) -> Result<f64> {
    QuadMeasure::from_form(p)?.gen_max(g)
}

pub fn gen_eig_min(g: &Mat, p: &Mat) -> Result<f64> {
    QuadMeasure::from_form(p)?.gen_min(g)
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    check_square(a, "state matrix")?;
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &Mat) -> Result<Mat> {
    let n = check_square(a, "exponent")?;
    let norm1 = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let b = &PADE13;
    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Singular("Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix exponential".into()));
    }
    Ok(r)
}

/// Solves X = A'XA + Q by Smith doubling. Requires ρ(A) < 1.
pub fn dlyap(a: &Mat, q: &Mat) -> Result<Mat> {
    check_square(a, "state matrix")?;
    let mut x = symmetrize(q);
    let mut ak = a.clone();
    for _ in 0..80 {
        let inc = ak.transpose() * &x * &ak;
        x += &inc;
        ak = &ak * &ak;
        if !x.norm().is_finite() || !ak.norm().is_finite() {
            break;
        }
        if inc.norm() <= 1e-15 * x.norm().max(f64::MIN_POSITIVE) {
            return Ok(symmetrize(&x));
        }
    }
    Err(Error::Domain(
        "Lyapunov doubling did not converge; state matrix not Schur stable".into(),
    ))
}

/// Minimal solution of X = A'X(I + GX)^{-1}A + H by structure-preserving
/// doubling (G, H symmetric positive semidefinite).
pub fn sda_dare(a: &Mat, g: &Mat, h: &Mat) -> Result<Mat> {
    let n = check_square(a, "state matrix")?;
    let id = Mat::identity(n, n);
    let (mut ak, mut gk, mut hk) = (a.clone(), symmetrize(g), symmetrize(h));
    for _ in 0..100 {
        let w = (&id + &gk * &hk).lu();
        let w_a = w
            .solve(&ak)
            .ok_or_else(|| Error::Singular("doubling step".into()))?;
        let w_g = w
            .solve(&gk)
            .ok_or_else(|| Error::Singular("doubling step".into()))?;
        let a_next = &ak * &w_a;
        let g_next = symmetrize(&(&gk + &ak * w_g * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_a));
        let delta = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if hk.iter().any(|x| !x.is_finite()) {
            break;
        }
        if delta <= 1e-14 * hk.norm().max(f64::MIN_POSITIVE) {
            return Ok(hk);
        }
    }
    Err(Error::Domain(
        "doubling iteration for the Riccati equation did not converge".into(),
    ))
}

/// Smallest eigenvalue of the symmetric block matrix [[M11, M12],[M12', M22]].
pub fn block_min_eig(m11: &Mat, m12: &Mat, m22: &Mat) -> Result<f64> {
    let (n, m) = (m11.nrows(), m22.nrows());
    let mut full = Mat::zeros(n + m, n + m);
    full.view_mut((0, 0), (n, n)).copy_from(m11);
    full.view_mut((0, n), (n, m)).copy_from(m12);
    full.view_mut((n, 0), (m, n)).copy_from(&m12.transpose());
    full.view_mut((n, n), (m, m)).copy_from(m22);
    sym_eig_min(&full)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_sym(n: usize, seed: u64) -> Mat {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Mat::from_fn(n, n, |_, _| next());
        symmetrize(&(&m + m.transpose()))
    }

    #[test]
    fn jacobi_matches_library_eigensolver() {
        for (n, seed) in [(1, 1), (3, 7), (6, 11), (12, 5)] {
            let a = test_sym(n, seed);
            let (vals, vecs) = sym_eigen(&a).unwrap();
            let mut reference: Vec<f64> = a
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            reference.sort_by(f64::total_cmp);
            for (x, y) in vals.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
            let recon = &vecs * Mat::from_diagonal(&vals) * vecs.transpose();
            assert!((recon - &a).norm() < 1e-12);
        }
    }

    #[test]
    fn generalized_eigenvalue_two_routes() {
        let p = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let direct = gen_eig_max(&g, &p).unwrap();
        let via_inverse = QuadMeasure::from_inverse(&p.clone().try_inverse().unwrap())
            .unwrap()
            .gen_max(&g)
            .unwrap();
        // Roots of det(G − λP) = 0.
        let (a, b, c) = (
            p.determinant(),
            -(g[(0, 0)] * p[(1, 1)] + g[(1, 1)] * p[(0, 0)] - 2.0 * g[(0, 1)] * p[(0, 1)]),
            g.determinant(),
        );
        let root = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((direct - root).abs() < 1e-12);
        assert!((via_inverse - root).abs() < 1e-12);
        assert!(gen_eig_max(&g, &Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn floored_inverse_matches_cholesky_route() {
        let p = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let s = p.clone().try_inverse().unwrap();
        let (m, p_back) = QuadMeasure::from_inverse_floored(&s, 1e-13).unwrap();
        assert!((p_back - &p).norm() < 1e-12);
        assert!((m.gen_max(&g).unwrap() - gen_eig_max(&g, &p).unwrap()).abs() < 1e-12);
        let singular = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let (m, _) = QuadMeasure::from_inverse_floored(&singular, 1e-13).unwrap();
        assert!(m.gen_min(&Mat::identity(2, 2)).unwrap() <= 1e-13);
        assert!(QuadMeasure::from_inverse_floored(&-singular, 1e-13).is_err());
    }

    #[test]
    fn expm_matches_library() {
        let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -10.0, -2.0, 0.3, 1.0, 0.0, -0.5]) * 3.0;
        let e = expm(&a).unwrap();
        let reference = a.clone().exp();
        assert!((&e - &reference).norm() < 1e-10 * reference.norm());
        let s = expm(&Mat::from_element(1, 1, -1.0)).unwrap();
        assert!((s[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(expm(&Mat::zeros(2, 2)).unwrap(), Mat::identity(2, 2));
    }

    #[test]
    fn lyapunov_scalar_and_residual() {
        let x = dlyap(&Mat::from_element(1, 1, 0.5), &Mat::from_element(1, 1, 1.0)).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.7]);
        let q = Mat::identity(2, 2);
        let x = dlyap(&a, &q).unwrap();
        assert!((a.transpose() * &x * &a + &q - &x).norm() < 1e-12);
        assert!(dlyap(
            &Mat::from_element(1, 1, 1.1),
            &q.view((0, 0), (1, 1)).into_owned()
        )
        .is_err());
    }

    #[test]
    fn doubling_matches_fixed_point() {
        let a = Mat::from_row_slice(2, 2, &[1.1, 0.4, 0.0, 0.8]);
        let g = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        let h = Mat::identity(2, 2);
        let x = sda_dare(&a, &g, &h).unwrap();
        let mut y = Mat::zeros(2, 2);
        for _ in 0..5000 {
            let inner = (Mat::identity(2, 2) + &g * &y).try_inverse().unwrap();
            y = a.transpose() * &y * inner * &a + &h;
        }
        assert!((&x - &y).norm() < 1e-9 * y.norm());
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let (c, s) = (0.6, 0.8);
        let a = Mat::from_row_slice(2, 2, &[c, -s, s, c]) * 0.9;
        assert!((spectral_radius(&a).unwrap() - 0.9).abs() < 1e-12);
    }
}
