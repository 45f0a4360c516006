//! Estimation of the certification constants from plant models: γ_k by
//! open-loop cost recursions or grid sampling, quadratic and NARX storage
//! functions, and sampled checks of the dissipation inequality.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{n_min_eq8, terminal_constants_scaled, HorizonBound};
use crate::constants::{CertificationConstants, TerminalConstants};
use crate::error::{domain, Error, Result};
use crate::linalg::{
    block_min_eig, cholesky_lower, dlyap, sda_dare, spectral_radius, symmetrize, Mat, QuadMeasure,
    Vector,
};
use crate::system::{
    LinearSystem, Model, NarxHistory, QuadraticStageCost, StateMeasure, StorageFunction,
    StorageKind,
};

/// Whether a constant is a guaranteed bound or a sampled under-estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Sampled,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Exact => "exact",
            Provenance::Sampled => "sampled",
        })
    }
}

fn check_us_admissible(sys: &LinearSystem, cost: &QuadraticStageCost) -> Result<()> {
    if !sys.input_admissible(&cost.u_s) {
        return domain("open-loop input u_s lies outside the input box");
    }
    Ok(())
}

/// G_1..G_K with G_1 = Q̃ and G_{k+1} = Q̃ + A'G_kA.
pub fn openloop_cost_forms(a: &Mat, q_tilde: &Mat, k: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(k);
    let mut g = q_tilde.clone();
    for _ in 0..k {
        out.push(g.clone());
        g = symmetrize(&(q_tilde + a.transpose() * &g * a));
    }
    out
}

/// γ_k = λmax(G_k + (A^k)'P_f A^k, P_σ) for k = 1..=K, with P_σ given
/// through its factorization.
pub fn gamma_sequence(
    a: &Mat,
    q_tilde: &Mat,
    measure: &QuadMeasure,
    p_f: Option<&Mat>,
    k: usize,
) -> Result<Vec<f64>> {
    let forms = openloop_cost_forms(a, q_tilde, k);
    let mut ak = a.clone();
    let mut out = Vec::with_capacity(k);
    for g in forms {
        let total = match p_f {
            Some(p) => g + ak.transpose() * p * &ak,
            None => g,
        };
        out.push(measure.gen_max(&total)?.max(0.0));
        ak = &ak * a;
    }
    Ok(out)
}

/// Cost-controllability constants of a linear plant under u ≡ u_s.
pub fn gamma_linear_openloop(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    sigma: &StateMeasure,
    p_f: Option<&Mat>,
    k: usize,
) -> Result<Vec<f64>> {
    check_us_admissible(sys, cost)?;
    let measure = QuadMeasure::from_form(&sigma.matrix(cost))?;
    gamma_sequence(&sys.a, &cost.state_weight(), &measure, p_f, k)
}

/// Axis-aligned grid of deviations x − x_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn uniform(dim: usize, half_width: f64, points: usize) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
            points: vec![points; dim],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lower.len() != dim || self.upper.len() != dim || self.points.len() != dim {
            return Err(Error::Dimension(format!(
                "grid has {} axes, model has {dim} states",
                self.points.len()
            )));
        }
        if self.points.iter().any(|&p| p == 0) {
            return domain("empty grid");
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(lo, hi)| !(lo <= hi))
        {
            return domain("grid lower bound exceeds upper bound");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(&self, d: usize, i: usize) -> f64 {
        let p = self.points[d];
        if p == 1 {
            0.5 * (self.lower[d] + self.upper[d])
        } else {
            self.lower[d] + (self.upper[d] - self.lower[d]) * i as f64 / (p - 1) as f64
        }
    }

    /// Deviation vector of the grid point with flat index `idx`.
    pub fn point(&self, mut idx: usize) -> Vector {
        let n = self.points.len();
        let mut v = Vector::zeros(n);
        for d in 0..n {
            let p = self.points[d];
            v[d] = self.axis(d, idx % p);
            idx /= p;
        }
        v
    }
}

/// State measure used on the grid. The NARX variant treats the grid point
/// as the state ν steps in the past and evaluates σ = W on the recorded
/// history.
#[derive(Debug, Clone, PartialEq)]
pub enum GridMeasure {
    State(StateMeasure),
    Narx { nu: usize, q: Mat, r: Mat },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: Vec<f64>,
    pub provenance: Provenance,
    pub evaluated: usize,
    pub skipped: usize,
    pub diverged: usize,
}

/// Ratios J_k(x, u_s)/σ(x) for k = 1..=K at one initial deviation `dx`,
/// with an optional terminal weight ω·σ. `None` when σ vanishes; an error
/// when the trajectory leaves the finite numbers.
pub fn gamma_ratios_at(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    measure: &GridMeasure,
    dx: &Vector,
    k: usize,
    omega: Option<f64>,
) -> Result<Option<Vec<f64>>> {
    let u_s = &cost.u_s;
    let mut x = &cost.x_s + dx;
    let y_s = &cost.c * &cost.x_s;
    let du = Vector::zeros(u_s.len());
    let mut history = match measure {
        GridMeasure::State(_) => None,
        GridMeasure::Narx { nu, .. } => {
            let mut h = NarxHistory::new(*nu)?;
            for _ in 0..*nu {
                h.push(&cost.c * &x - &y_s, du.clone());
                x = model.step(&x, u_s);
            }
            Some(h)
        }
    };
    let sigma_of = |x: &Vector, h: &Option<NarxHistory>| -> Result<f64> {
        match (measure, h) {
            (GridMeasure::State(m), _) => Ok(m.eval(x, cost)),
            (GridMeasure::Narx { q, r, .. }, Some(h)) => h.storage(q, r),
            _ => unreachable!(),
        }
    };
    let s0 = sigma_of(&x, &history)?;
    if !(s0 > 1e-14) {
        return Ok(None);
    }
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        acc += cost.eval(&x, u_s);
        if let Some(h) = history.as_mut() {
            h.push(&cost.c * &x - &y_s, du.clone());
        }
        x = model.step(&x, u_s);
        if x.iter().any(|v| !v.is_finite()) || !acc.is_finite() {
            return Err(Error::NonFinite("open-loop trajectory diverged".into()));
        }
        let tail = match omega {
            Some(w) => w * sigma_of(&x, &history)?,
            None => 0.0,
        };
        out.push((acc + tail) / s0);
    }
    Ok(Some(out))
}

/// Sampled γ_k: maximum of J_k(x, u_s)/σ(x) over the grid, evaluated in
/// parallel. The result under-estimates the supremum.
pub fn gamma_nonlinear_grid(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    measure: &GridMeasure,
    grid: &GridSpec,
    k: usize,
    omega: Option<f64>,
) -> Result<GammaEstimate> {
    grid.validate(model.state_dim())?;
    if k == 0 {
        return domain("need at least one gamma entry");
    }
    if !model.input_admissible(&cost.u_s) {
        return domain("open-loop input u_s lies outside the input box");
    }
    let results: Vec<Result<Option<Vec<f64>>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| gamma_ratios_at(model, cost, measure, &grid.point(i), k, omega))
        .collect();
    let mut est = GammaEstimate {
        gamma: vec![0.0; k],
        provenance: Provenance::Sampled,
        evaluated: 0,
        skipped: 0,
        diverged: 0,
    };
    for r in results {
        match r {
            Ok(Some(ratios)) => {
                est.evaluated += 1;
                for (g, v) in est.gamma.iter_mut().zip(ratios) {
                    *g = g.max(v);
                }
            }
            Ok(None) => est.skipped += 1,
            Err(Error::NonFinite(_)) => est.diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if est.evaluated == 0 {
        return domain("no grid point with positive state measure");
    }
    Ok(est)
}

/// W(ξ_t) = Σ_{k=1}^{ν} (ν+1−k)/ν · (‖y(t−k)−y_s‖²_Q + ‖u(t−k)−u_s‖²_R), ε_o = 1/ν.
pub fn narx_storage(nu: usize, q: Mat, r: Mat) -> Result<StorageFunction> {
    if nu < 1 {
        return domain("NARX lag must be at least 1");
    }
    cholesky_lower(&q)?;
    cholesky_lower(&r)?;
    Ok(StorageFunction {
        kind: StorageKind::Narx { nu, q, r },
        eps_o: 1.0 / nu as f64,
    })
}

/// Per-step NARX dissipation along a closed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxDissipation {
    /// W⁺ − W + ε_o W − ℓ̂, never positive.
    pub residual: Vec<f64>,
    /// W⁺ − W − (ℓ̂_t − (1/ν)Σ_j ℓ̂_{t−j}), zero up to rounding.
    pub telescoping: Vec<f64>,
}

/// Simulates `inputs` from `x0` and evaluates the NARX storage once the
/// history is full.
pub fn narx_dissipation(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    storage: &StorageFunction,
    x0: &Vector,
    inputs: &[Vector],
) -> Result<NarxDissipation> {
    let StorageKind::Narx { nu, q, r } = &storage.kind else {
        return domain("storage is not of NARX type");
    };
    let y_s = &cost.c * &cost.x_s;
    let mut h = NarxHistory::new(*nu)?;
    let mut x = x0.clone();
    let mut out = NarxDissipation {
        residual: Vec::new(),
        telescoping: Vec::new(),
    };
    for u in inputs {
        let dy = &cost.c * &x - &y_s;
        let du = u - &cost.u_s;
        let stage = NarxHistory::stage(q, r, &dy, &du);
        if h.is_full() {
            let w = h.storage(q, r)?;
            let mean = h.mean_stage(q, r);
            let mut next = h.clone();
            next.push(dy.clone(), du.clone());
            let w_next = next.storage(q, r)?;
            let scale = 1.0 + w.abs() + stage.abs();
            out.residual
                .push((w_next - w + storage.eps_o * w - stage) / scale);
            out.telescoping.push((w_next - w - (stage - mean)) / scale);
        }
        h.push(dy, du);
        x = model.step(&x, u);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMethod {
    /// Largest quadratic W satisfying the dissipation LMI, from the dual
    /// Riccati equation.
    Maximal,
    /// Lyapunov-equation anchor scaled by a line-searched factor.
    LyapunovScaling,
}

/// Outcome for one candidate ε_o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageCandidate {
    pub eps_o: f64,
    pub gamma_bar: Option<f64>,
    pub n_min: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageSynthesis {
    pub storage: StorageFunction,
    /// P_σ = P_o, the storage matrix.
    pub p: Mat,
    pub constants: CertificationConstants<f64>,
    pub horizon: HorizonBound<f64>,
    pub candidates: Vec<StorageCandidate>,
    measure: QuadMeasure,
}

impl StorageSynthesis {
    /// Factorization of P_o for generalized eigenvalues against σ = W.
    pub fn measure(&self) -> &QuadMeasure {
        &self.measure
    }
}

/// Relative eigenvalue floor applied to S = P^{-1}. Directions below it
/// carry a storage so large that they never bind γ_k.
const INVERSE_FLOOR: f64 = 1e-13;

/// `points` logarithmically spaced values in [lo, hi].
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Dissipation LMI M(P) = [[ηP + Q̃ − A'PA, −A'PB], [−B'PA, R − B'PB]].
pub fn dissipation_lmi_min_eig(
    sys: &LinearSystem,
    q_tilde: &Mat,
    r: &Mat,
    p: &Mat,
    eta: f64,
) -> Result<f64> {
    let (a, b) = (&sys.a, &sys.b);
    let m11 = p * eta + q_tilde - a.transpose() * p * a;
    let m12 = -(a.transpose() * p * b);
    let m22 = r - b.transpose() * p * b;
    block_min_eig(&symmetrize(&m11), &m12, &symmetrize(&m22))
}

/// S = P^{-1} of the largest P with M(P) ⪰ 0, from
/// S = ÃS(I + Q'S)^{-1}Ã' + BR^{-1}B' with Ã = A/√η and Q' = Q̃/η.
pub fn maximal_storage_inverse(
    sys: &LinearSystem,
    q_tilde: &Mat,
    r: &Mat,
    eta: f64,
) -> Result<Mat> {
    if !(eta > 0.0 && eta <= 1.0) {
        return domain("eta must lie in (0,1]");
    }
    let r_inv = cholesky_lower(r).and_then(|_| {
        r.clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("input weight".into()))
    })?;
    let a_t = sys.a.transpose() / eta.sqrt();
    let g = q_tilde / eta;
    let h = &sys.b * r_inv * sys.b.transpose();
    sda_dare(&a_t, &g, &h)
}

/// Largest t with M(tP₀) ⪰ 0 where A'P₀A − ηP₀ = −Q̃.
fn lyapunov_scaled_storage(sys: &LinearSystem, q_tilde: &Mat, r: &Mat, eta: f64) -> Result<Mat> {
    let a_t = &sys.a / eta.sqrt();
    let p0 = dlyap(&a_t, &(q_tilde / eta))?;
    let feasible = |t: f64| -> Result<bool> {
        let p = &p0 * t;
        let scale = 1.0 + q_tilde.norm() + r.norm() + p.norm();
        Ok(dissipation_lmi_min_eig(sys, q_tilde, r, &p, eta)? >= -1e-12 * scale)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(p0 * lo);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !(lo > 0.0) {
        return Err(Error::NoCandidate(format!(
            "no positive scaling at eta = {eta}"
        )));
    }
    Ok(p0 * lo)
}

/// Quadratic storage W = ‖x − x_s‖²_{P_o} with σ = W for each ε_o in the
/// grid; keeps the candidate with the smallest stabilizing-horizon bound.
pub fn synthesize_storage_linear(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    eps_grid: &[f64],
    k: usize,
    method: StorageMethod,
) -> Result<StorageSynthesis> {
    check_us_admissible(sys, cost)?;
    if eps_grid.is_empty() {
        return domain("empty eps_o grid");
    }
    if method == StorageMethod::LyapunovScaling && spectral_radius(&sys.a)? >= 1.0 {
        return Err(Error::NoCandidate("open loop is not Schur stable".into()));
    }
    let q_tilde = cost.state_weight();
    let mut best: Option<(f64, Mat, QuadMeasure, Vec<f64>, f64, HorizonBound<f64>)> = None;
    let mut candidates = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let attempt = (|| -> Result<(Mat, QuadMeasure, Vec<f64>, HorizonBound<f64>)> {
            if !(eps > 0.0 && eps < 1.0) {
                return domain("eps_o must lie in (0,1)");
            }
            let eta = 1.0 - eps;
            let (p, measure) = match method {
                StorageMethod::Maximal => {
                    let s = maximal_storage_inverse(sys, &q_tilde, &cost.r, eta)?;
                    let (measure, p) = QuadMeasure::from_inverse_floored(&s, INVERSE_FLOOR)?;
                    (p, measure)
                }
                StorageMethod::LyapunovScaling => {
                    let p = lyapunov_scaled_storage(sys, &q_tilde, &cost.r, eta)?;
                    let measure = QuadMeasure::from_form(&p)?;
                    (p, measure)
                }
            };
            let gamma = gamma_sequence(&sys.a, &q_tilde, &measure, None, k)?;
            let gbar = gamma.iter().copied().fold(0.0, f64::max);
            let bound = n_min_eq8(gbar, eps)?;
            Ok((p, measure, gamma, bound))
        })();
        match attempt {
            Ok((p, measure, gamma, bound)) => {
                let gbar = gamma.iter().copied().fold(0.0, f64::max);
                candidates.push(StorageCandidate {
                    eps_o: eps,
                    gamma_bar: Some(gbar),
                    n_min: Some(bound.n_min),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| bound.n_min < b.5.n_min) {
                    best = Some((eps, p, measure, gamma, gbar, bound));
                }
            }
            Err(e) => candidates.push(StorageCandidate {
                eps_o: eps,
                gamma_bar: None,
                n_min: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (eps, p, measure, gamma, _gbar, horizon) = best.ok_or_else(|| {
        Error::NoCandidate("no eps_o in the grid admits a storage function".into())
    })?;
    Ok(StorageSynthesis {
        storage: StorageFunction::quadratic(p.clone(), eps),
        p,
        constants: CertificationConstants::storage(gamma, eps),
        horizon,
        candidates,
        measure,
    })
}

/// Sampled evidence for the dissipation inequality and the sandwich bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageVerification {
    pub samples: usize,
    /// max of (W(f(x,u)) − W(x) + ε_oσ(x) − ℓ(x,u)) / (1 + ℓ + W + σ).
    pub max_dissipation: f64,
    /// max violation of γ̲_oσ ≤ W ≤ γ̄_oσ, scaled like the above.
    pub max_sandwich: f64,
    pub passed: bool,
    pub provenance: Provenance,
}

/// Draws x − x_s uniformly from [−radius, radius]^n and u uniformly from
/// the input box (clipped to u_s ± radius where the box is unbounded).
#[allow(clippy::too_many_arguments)]
pub fn verify_storage(
    model: &dyn Model,
    cost: &QuadraticStageCost,
    storage: &StorageFunction,
    sigma: &StateMeasure,
    gamma_o: (f64, f64),
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<StorageVerification> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (model.state_dim(), model.input_dim());
    let (lo_u, hi_u) = (model.input_lower(), model.input_upper());
    let mut out = StorageVerification {
        samples,
        max_dissipation: f64::NEG_INFINITY,
        max_sandwich: f64::NEG_INFINITY,
        passed: false,
        provenance: Provenance::Sampled,
    };
    for _ in 0..samples {
        let dx = Vector::from_fn(n, |_, _| rng.random_range(-radius..=radius));
        let x = &cost.x_s + dx;
        let u = Vector::from_fn(m, |i, _| {
            let lo = lo_u[i].max(cost.u_s[i] - radius);
            let hi = hi_u[i].min(cost.u_s[i] + radius);
            if lo < hi {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        });
        let w = storage.eval_state(&x, &cost.x_s)?;
        let w_next = storage.eval_state(&model.step(&x, &u), &cost.x_s)?;
        let s = sigma.eval(&x, cost);
        let l = cost.eval(&x, &u);
        let scale = 1.0 + l.abs() + w.abs() + s.abs();
        out.max_dissipation = out
            .max_dissipation
            .max((w_next - w + storage.eps_o * s - l) / scale);
        let sandwich = (gamma_o.0 * s - w).max(w - gamma_o.1 * s);
        out.max_sandwich = out.max_sandwich.max(sandwich / scale);
    }
    out.passed = samples > 0 && out.max_dissipation <= 1e-9 && out.max_sandwich <= 1e-9;
    Ok(out)
}

/// Quadratic ISS storage W(Ax+Bu) ≤ ηW(x) + ‖u‖², the maximal solution
/// for zero state weight and unit input weight.
pub fn iss_storage(sys: &LinearSystem, eps_o: f64) -> Result<(StorageFunction, QuadMeasure)> {
    if !(eps_o > 0.0 && eps_o < 1.0) {
        return domain("eps_o must lie in (0,1)");
    }
    let n = sys.n();
    let s = maximal_storage_inverse(
        sys,
        &Mat::zeros(n, n),
        &Mat::identity(sys.m(), sys.m()),
        1.0 - eps_o,
    )?;
    let (measure, p) = QuadMeasure::from_inverse_floored(&s, INVERSE_FLOOR)?;
    Ok((StorageFunction::quadratic(p, eps_o), measure))
}

/// With input weight r·I, W̃ = rW satisfies the dissipation inequality
/// with σ = W̃, so the γ_k computed against W shrink by 1/r.
pub fn rescale_for_input_regularization(
    storage: &StorageFunction,
    gamma: &[f64],
    r: f64,
) -> Result<(StorageFunction, CertificationConstants<f64>)> {
    if !(r > 0.0) {
        return domain("input weight must be positive");
    }
    let scaled: Vec<f64> = gamma.iter().map(|g| g / r).collect();
    Ok((
        storage.scaled(r),
        CertificationConstants::storage(scaled, storage.eps_o),
    ))
}

/// V_f = ω̃σ with the largest ω̃ such that ω̃σ ≤ ωℓ_min.
pub fn terminal_scaled_linear(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    measure: &QuadMeasure,
    omega: f64,
    k: usize,
) -> Result<(TerminalConstants<f64>, Mat)> {
    check_us_admissible(sys, cost)?;
    let q_tilde = cost.state_weight();
    let omega_tilde = omega * measure.gen_min(&q_tilde)?;
    if !(omega_tilde > 0.0) {
        return domain("scaled terminal weight vanishes; stage cost is not positive definite");
    }
    let p_sigma = measure.form();
    let p_f = &p_sigma * omega_tilde;
    let gamma_f = gamma_sequence(&sys.a, &q_tilde, measure, Some(&p_f), k)?;
    let t = terminal_constants_scaled(omega_tilde, gamma_f[0])?.with_gamma_f(gamma_f);
    Ok((t, p_f))
}

/// V_f(x) = Σ_{j<M} ℓ(x_j, u_s), the finite tail under the open-loop
/// fallback, with constants from generalized eigenvalues against P_σ.
pub fn terminal_finite_tail_linear(
    sys: &LinearSystem,
    cost: &QuadraticStageCost,
    measure: &QuadMeasure,
    m: usize,
    k: usize,
) -> Result<(TerminalConstants<f64>, Mat)> {
    check_us_admissible(sys, cost)?;
    if m == 0 {
        return domain("tail length must be at least 1");
    }
    let q_tilde = cost.state_weight();
    let forms = openloop_cost_forms(&sys.a, &q_tilde, m + k);
    let g_m = forms[m - 1].clone();
    let a_m = sys.a.pow(m as u32);
    let eps_f = QuadMeasure::from_form(&g_m)?.gen_max(&(a_m.transpose() * &q_tilde * &a_m))?;
    let c_lo = measure.gen_min(&g_m)?;
    let c_hi = measure.gen_max(&g_m)?;
    let gamma_f = forms[m..m + k]
        .iter()
        .map(|g| measure.gen_max(g).map(|v| v.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok((TerminalConstants::new(c_lo, c_hi, eps_f, gamma_f), g_m))
}

/// CSV with columns k,gamma_k,mode,provenance.
pub fn write_gamma_csv<W: Write>(
    mut w: W,
    gamma: &[f64],
    mode: &str,
    provenance: Provenance,
) -> std::io::Result<()> {
    writeln!(w, "k,gamma_k,mode,provenance")?;
    for (i, g) in gamma.iter().enumerate() {
        writeln!(w, "{},{:.12e},{},{}", i + 1, g, mode, provenance)?;
    }
    Ok(())
}
