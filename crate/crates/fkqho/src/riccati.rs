//! Riccati fixed points, the Floquet form of the Riccati flow and its decay constants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, eigenvalues, expm, inverse, lambda_max, lambda_min, log_norm, random_normal_vector, random_psd,
    solve_lyapunov, spectral_abscissa, spectral_norm, sqrt_positive_spectrum, sym_eigen, symmetrize, Mat,
};
use crate::model::{self, ModelFile, ModelParams};
use crate::quadrature::{adaptive_simpson, matrix_quadrature};

/// `Ricc(P) = A P + P A′ + R − P S P`.
pub fn ricc(p: &ModelParams, x: &Mat) -> Mat {
    &p.a * x + x * p.a.transpose() + &p.r - x * &p.s * x
}

/// Dual map `A′ Q + Q A − Q R Q + S`.
pub fn ricc_dual(p: &ModelParams, q: &Mat) -> Mat {
    p.a.transpose() * q + q * &p.a - q * &p.r * q + &p.s
}

fn rel(res: &Mat, x: &Mat) -> f64 {
    res.norm() / x.norm().max(linalg::ABS_FLOOR)
}

/// Residual norms recorded at solve time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolveResiduals {
    pub care_p_inf: f64,
    pub care_p_inf_minus: f64,
    pub care_q_inf: f64,
    pub gramian_gap: f64,
    pub gramian_gap_h: f64,
    pub trace_rq: f64,
    pub trace_minus: f64,
    pub newton_sweeps: usize,
}

/// Fixed points of the Riccati equation and the derived Gramians and drifts.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub params: ModelParams,
    pub p_inf: Mat,
    pub p_inf_minus: Mat,
    pub q_inf: Mat,
    pub q_inf_minus: Mat,
    pub delta_inf: Mat,
    pub delta_inf_h: Mat,
    pub p_h_inf: Mat,
    pub drift_h: Mat,
    pub drift_filter: Mat,
    pub lambda0: f64,
    pub residuals: SolveResiduals,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Branch {
    Stable,
    AntiStable,
}

fn hamiltonian(p: &ModelParams) -> Mat {
    let r = p.dim;
    let mut h = Mat::zeros(2 * r, 2 * r);
    h.view_mut((0, 0), (r, r)).copy_from(&p.a.transpose());
    h.view_mut((0, r), (r, r)).copy_from(&(-&p.s));
    h.view_mut((r, 0), (r, r)).copy_from(&(-&p.r));
    h.view_mut((r, r), (r, r)).copy_from(&(-&p.a));
    h
}

/// Newton iteration for the matrix sign function with determinant scaling.
fn matrix_sign(h: &Mat) -> Result<Mat> {
    let n = h.nrows();
    let mut z = h.clone();
    let mut scaled = true;
    for _ in 0..200 {
        let lu = z.clone().lu();
        let logdet: f64 = lu.u().diagonal().iter().map(|u| u.abs().ln()).sum();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Solver("sign iteration hit a singular iterate".into()))?;
        let c = if scaled { (-logdet / n as f64).exp() } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let diff = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if !size.is_finite() {
            return Err(Error::Solver("sign iteration diverged".into()));
        }
        if diff <= 1e-2 * size {
            scaled = false;
        }
        if diff <= 1e-14 * size {
            return Ok(z);
        }
    }
    Ok(z)
}

/// Orthonormal basis of the range of a rank-`k` matrix, from the top eigenvectors of `M M′`.
fn range_basis(m: &Mat, k: usize) -> Mat {
    let (_, vecs) = sym_eigen(&(m * m.transpose()));
    let n = m.nrows();
    let mut out = Mat::zeros(n, k);
    for c in 0..k {
        out.set_column(c, &vecs.column(n - 1 - c));
    }
    out
}

/// Newton-Kleinman sweeps, kept while the residual decreases.
fn newton_refine(p: &ModelParams, x0: Mat, max_sweeps: usize) -> (Mat, usize) {
    let mut x = x0;
    let mut res = rel(&ricc(p, &x), &x);
    let mut sweeps = 0;
    for _ in 0..max_sweeps {
        let f = ricc(p, &x);
        let d = &p.a - &x * &p.s;
        let Ok(e) = solve_lyapunov(&d, &f) else { break };
        let cand = symmetrize(&(&x + e));
        let cres = rel(&ricc(p, &cand), &cand);
        if !(cres < res) {
            break;
        }
        x = cand;
        res = cres;
        sweeps += 1;
    }
    (x, sweeps)
}

fn care_branch(p: &ModelParams, branch: Branch) -> Result<(Mat, usize)> {
    let r = p.dim;
    let h = hamiltonian(p);
    let tol = 1e-10 * h.norm().max(1.0);
    let eig = eigenvalues(&h)?;
    let offending: Vec<String> = eig
        .iter()
        .filter(|z| z.re.abs() <= tol)
        .map(|z| format!("{:e}{:+e}i", z.re, z.im))
        .collect();
    let stable = eig.iter().filter(|z| z.re < -tol).count();
    if !offending.is_empty() || stable != r {
        return Err(Error::Solver(format!(
            "Hamiltonian does not split into {r} stable and {r} anti-stable eigenvalues \
             ({stable} stable); eigenvalues near the imaginary axis: [{}]",
            offending.join(", ")
        )));
    }
    let w = matrix_sign(&h)?;
    let id = Mat::identity(2 * r, 2 * r);
    let proj = match branch {
        Branch::Stable => (&id - &w) * 0.5,
        Branch::AntiStable => (&id + &w) * 0.5,
    };
    let basis = range_basis(&proj, r);
    let u1 = basis.view((0, 0), (r, r)).into_owned();
    let u2 = basis.view((r, 0), (r, r)).into_owned();
    let u1_inv = inverse(&u1, "invariant subspace block")
        .map_err(|e| Error::Solver(format!("invariant subspace is not a graph: {e}")))?;
    let x = symmetrize(&(u2 * u1_inv));
    Ok(newton_refine(p, x, 5))
}

fn assemble(params: &ModelParams, p_inf: Mat, p_inf_minus: Mat, q_inf: Mat, sweeps: usize) -> Result<RiccatiSolution> {
    let q_inf_minus = symmetrize(&(-inverse(&p_inf, "P_inf")?));
    let drift_filter = &params.a - &p_inf * &params.s;
    let drift_h = &params.a - &params.r * &q_inf;
    for (m, name) in [(&drift_filter, "A - P_inf S"), (&drift_h, "A - R Q_inf")] {
        let sa = spectral_abscissa(m);
        if !(sa < 0.0) {
            return Err(Error::Solver(format!("{name} is not Hurwitz (abscissa {sa:e})")));
        }
    }
    let delta_inf = solve_lyapunov(&drift_filter.transpose(), &params.s)?;
    let delta_inf_h = solve_lyapunov(&drift_h, &params.r)?;
    let p_h_inf = symmetrize(&inverse(&(inverse(&p_inf, "P_inf")? + &q_inf), "P_inf^-1 + Q_inf")?);
    let r = params.dim;
    let id = Mat::identity(r, r);
    let tr_sp = (&params.s * &p_inf).trace();
    let tr_rq = (&params.r * &q_inf).trace();
    let tr_minus = 2.0 * params.a.trace() - (&params.s * &p_inf_minus).trace();
    let residuals = SolveResiduals {
        care_p_inf: rel(&ricc(params, &p_inf), &p_inf),
        care_p_inf_minus: rel(&ricc(params, &p_inf_minus), &p_inf_minus),
        care_q_inf: rel(&ricc_dual(params, &q_inf), &q_inf),
        gramian_gap: ((&p_inf - &p_inf_minus) * &delta_inf - &id).norm(),
        gramian_gap_h: ((&q_inf - &q_inf_minus) * &delta_inf_h - &id).norm(),
        trace_rq: (tr_sp - tr_rq).abs(),
        trace_minus: (tr_sp - tr_minus).abs(),
        newton_sweeps: sweeps,
    };
    Ok(RiccatiSolution {
        params: params.clone(),
        p_inf,
        p_inf_minus,
        q_inf,
        q_inf_minus,
        delta_inf,
        delta_inf_h,
        p_h_inf,
        drift_h,
        drift_filter,
        lambda0: 0.5 * tr_sp,
        residuals,
    })
}

/// Solves for `P∞ ≻ 0` and `P∞⁻ ≺ 0` through the stable and anti-stable invariant
/// subspaces of `[[A′, −S], [−R, −A]]`, refined by Newton-Kleinman sweeps.
pub fn solve_care(params: &ModelParams) -> Result<RiccatiSolution> {
    model::require_valid(params)?;
    let (p_inf, s1) = care_branch(params, Branch::Stable)?;
    let (p_inf_minus, s2) = care_branch(params, Branch::AntiStable)?;
    let q_inf = symmetrize(&(-inverse(&p_inf_minus, "P_inf_minus")?));
    assemble(params, p_inf, p_inf_minus, q_inf, s1 + s2)
}

/// Closed-form fixed points of a reversible model via `(A² + RS)^{1/2}`.
pub fn reversible_fixed_points(params: &ModelParams) -> Result<RiccatiSolution> {
    model::require_valid(params)?;
    if !model::is_reversible(params) {
        return Err(Error::Precondition("model is not reversible (needs R > 0 and AR = RA')".into()));
    }
    let root = sqrt_positive_spectrum(&(&params.a * &params.a + &params.r * &params.s))?;
    let r_inv = inverse(&params.r, "R")?;
    let q_inf = symmetrize(&(&r_inv * (&params.a + &root)));
    let p_inf = symmetrize(&inverse(&(&r_inv * (&root - &params.a)), "P_inf^-1")?);
    let p_inf_minus = symmetrize(&inverse(&(-(&r_inv * (&params.a + &root))), "(P_inf_minus)^-1")?);
    let mut sol = assemble(params, p_inf, p_inf_minus, q_inf, 0)?;
    sol.p_h_inf = symmetrize(&(inverse(&root, "(A^2+RS)^1/2")? * &params.r * 0.5));
    Ok(sol)
}

/// `e^{t D}` and the Gramian `Δ_t` at a fixed time.
#[derive(Debug, Clone)]
pub struct FloquetAt {
    pub t: f64,
    pub exp_d: Mat,
    pub delta: Mat,
}

impl RiccatiSolution {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Precomputes `e^{tD}` and `Δ_t = Δ∞ − e^{tD′} Δ∞ e^{tD}`.
    pub fn at(&self, t: f64) -> Result<FloquetAt> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
        }
        let exp_d = expm(&self.drift_filter, t)?;
        let delta = symmetrize(&(&self.delta_inf - exp_d.transpose() * &self.delta_inf * &exp_d));
        Ok(FloquetAt { t, exp_d, delta })
    }

    pub fn f_map_at(&self, at: &FloquetAt, p: &Mat) -> Result<Mat> {
        let r = self.dim();
        let f = Mat::identity(r, r) + (p - &self.p_inf) * &at.delta;
        let c = linalg::cond(&f);
        if !(c <= 1e14) {
            return Err(Error::Domain(format!("F_t(P) is numerically singular (condition {c:e})")));
        }
        Ok(f)
    }

    pub fn flow_at(&self, at: &FloquetAt, p: &Mat) -> Result<Mat> {
        let f = self.f_map_at(at, p)?;
        let finv = inverse(&f, "F_t(P)")?;
        Ok(symmetrize(&(&self.p_inf + &at.exp_d * finv * (p - &self.p_inf) * at.exp_d.transpose())))
    }

    pub fn semigroup_at(&self, at: &FloquetAt, p: &Mat) -> Result<Mat> {
        let f = self.f_map_at(at, p)?;
        Ok(&at.exp_d * inverse(&f, "F_t(P)")?)
    }

    pub fn to_export(&self, decay: Option<DecayConstants>) -> SolutionExport {
        SolutionExport {
            model: self.params.to_file(),
            p_inf: self.p_inf.clone(),
            p_inf_minus: self.p_inf_minus.clone(),
            q_inf: self.q_inf.clone(),
            q_inf_minus: self.q_inf_minus.clone(),
            delta_inf: self.delta_inf.clone(),
            delta_inf_h: self.delta_inf_h.clone(),
            p_h_inf: self.p_h_inf.clone(),
            drift_h: self.drift_h.clone(),
            drift_filter: self.drift_filter.clone(),
            lambda0: self.lambda0,
            residuals: self.residuals.clone(),
            decay,
        }
    }

    pub fn from_export(e: &SolutionExport) -> Result<Self> {
        Ok(Self {
            params: ModelParams::from_file(&e.model)?,
            p_inf: e.p_inf.clone(),
            p_inf_minus: e.p_inf_minus.clone(),
            q_inf: e.q_inf.clone(),
            q_inf_minus: e.q_inf_minus.clone(),
            delta_inf: e.delta_inf.clone(),
            delta_inf_h: e.delta_inf_h.clone(),
            p_h_inf: e.p_h_inf.clone(),
            drift_h: e.drift_h.clone(),
            drift_filter: e.drift_filter.clone(),
            lambda0: e.lambda0,
            residuals: e.residuals.clone(),
        })
    }
}

/// JSON export of a solution together with its model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolutionExport {
    pub model: ModelFile,
    #[serde(with = "linalg::serde_mat")]
    pub p_inf: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub p_inf_minus: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub q_inf: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub q_inf_minus: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub delta_inf: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub delta_inf_h: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub p_h_inf: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub drift_h: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub drift_filter: Mat,
    pub lambda0: f64,
    pub residuals: SolveResiduals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayConstants>,
}

/// `Δ_t` by the closed form `Δ∞ − e^{tD′} Δ∞ e^{tD}`.
pub fn gramian_delta(sol: &RiccatiSolution, t: f64) -> Result<Mat> {
    Ok(sol.at(t)?.delta)
}

/// `Δ_t = ∫₀ᵗ e^{sD′} S e^{sD} ds` by composite Simpson with `panels` panels.
pub fn gramian_delta_quadrature(sol: &RiccatiSolution, t: f64, panels: usize) -> Result<Mat> {
    let d = &sol.drift_filter;
    let s = &sol.params.s;
    let g = |u: f64| {
        let e = (d * u).exp();
        e.transpose() * s * e
    };
    matrix_quadrature(g, 0.0, t, panels).map(|m| symmetrize(&m))
}

/// `𝔽_t(P) = I + (P − P∞) Δ_t`.
pub fn f_map(sol: &RiccatiSolution, p: &Mat, t: f64) -> Result<Mat> {
    sol.f_map_at(&sol.at(t)?, p)
}

/// `ℰ_t(P) = e^{tD} 𝔽_t(P)⁻¹`.
pub fn semigroup_e(sol: &RiccatiSolution, p: &Mat, t: f64) -> Result<Mat> {
    sol.semigroup_at(&sol.at(t)?, p)
}

/// `φ_t(P) = P∞ + ℰ_t(P∞) 𝔽_t(P)⁻¹ (P − P∞) ℰ_t(P∞)′`.
pub fn riccati_flow(sol: &RiccatiSolution, p: &Mat, t: f64) -> Result<Mat> {
    sol.flow_at(&sol.at(t)?, p)
}

/// Constants `(α, β)` with `‖e^{tM}‖ ≤ α e^{−βt}`: `(1, −μ(M))` when the log-norm is
/// negative, otherwise the Coppel pair with `γ = ½`.
pub fn exp_bound(m: &Mat) -> Result<(f64, f64)> {
    let mu = log_norm(m);
    if mu < 0.0 {
        return Ok((1.0, -mu));
    }
    let sa = spectral_abscissa(m);
    if !(sa < 0.0) {
        return Err(Error::Precondition(format!("matrix is not Hurwitz (abscissa {sa:e})")));
    }
    let gamma = 0.5;
    let a = 2.0 * spectral_norm(m) / sa.abs();
    Ok(((a / gamma).powi(m.nrows() as i32 - 1), (1.0 - gamma) * sa.abs()))
}

/// `∫₀^∞ ‖e^{tM}‖² dt`, truncated where the `(α, β)` tail bound drops below `1e-14`.
pub fn iota(m: &Mat, alpha: f64, beta: f64) -> f64 {
    let cut = ((alpha * alpha / (2.0 * beta * 1e-14)).ln() / (2.0 * beta)).max(1.0);
    let g = |t: f64| {
        let n = spectral_norm(&(m * t).exp());
        n * n
    };
    // splitting keeps the recursion shallow on long horizons
    let pieces = 16;
    let h = cut / pieces as f64;
    (0..pieces)
        .map(|k| adaptive_simpson(&g, k as f64 * h, (k + 1) as f64 * h, 1e-14))
        .sum()
}

/// Decay constants of the filter and h-process drifts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecayConstants {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub iota_h: f64,
    pub delta: f64,
    pub chi_delta: f64,
    #[serde(with = "linalg::serde_mat")]
    pub pi_minus_delta: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub pi_plus_delta: Mat,
    /// Largest `‖e^{tD}‖ e^{βt} / α` over the sampled times; at most one when the bound holds.
    pub bound_ratio: f64,
}

pub const DEFAULT_DELTA: f64 = 0.1;

/// Sampled initial covariances used for the empirical flow envelopes.
fn sample_covariances(r: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Mat::zeros(r, r), Mat::identity(r, r) * 1e-3, Mat::identity(r, r) * 1e3];
    for k in 0..6 {
        out.push(random_psd(&mut rng, r, 10f64.powi(k - 2), 0.0));
    }
    out
}

/// Computes every decay constant for a given `δ > 0`.
///
/// `Π_{±,δ}` are the scalar multiples of the identity that bracket `φ_t(P)` over
/// sampled `P` and `t ∈ [δ, δ + 20/β]`; they are empirical certificates.
pub fn decay_constants(sol: &RiccatiSolution, delta: f64) -> Result<DecayConstants> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let r = sol.dim();
    let (alpha, beta) = exp_bound(&sol.drift_filter)?;
    let (alpha_h, beta_h) = exp_bound(&sol.drift_h)?;
    let iota_h = iota(&sol.drift_h, alpha_h, beta_h);
    let at = sol.at(delta)?;
    let chi_delta = 1.0 / (lambda_min(&at.delta) * lambda_min(&(-&sol.p_inf_minus)));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let horizon = delta + 20.0 / beta;
    for p in sample_covariances(r, 0x5eed) {
        for k in 0..40 {
            let t = delta + horizon * k as f64 / 39.0;
            let phi = riccati_flow(sol, &p, t)?;
            lo = lo.min(lambda_min(&phi));
            hi = hi.max(lambda_max(&phi));
        }
    }
    let mut bound_ratio: f64 = 0.0;
    for k in 0..50 {
        let t = 10.0 / beta * k as f64 / 49.0;
        let n = spectral_norm(&expm(&sol.drift_filter, t)?);
        bound_ratio = bound_ratio.max(n * (beta * t).exp() / alpha);
    }
    Ok(DecayConstants {
        alpha,
        beta,
        alpha_h,
        beta_h,
        iota_h,
        delta,
        chi_delta,
        pi_minus_delta: Mat::identity(r, r) * lo,
        pi_plus_delta: Mat::identity(r, r) * hi,
        bound_ratio,
    })
}

/// Outcome of the randomized Lipschitz checks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LipschitzReport {
    pub delta: f64,
    pub samples: usize,
    /// Largest observed `lhs / rhs` for the covariance contraction.
    pub covariance_ratio: f64,
    /// Largest observed `lhs / rhs` for the mean-flow estimate.
    pub mean_ratio: f64,
    /// Largest relative residual of the difference decomposition.
    pub decomposition_residual: f64,
    pub passed: bool,
}

/// Checks `‖φ_t(Q₁) − φ_t(Q₂)‖ ≤ (αχ_δ)² e^{−2βt} ‖Q₁ − Q₂‖` and the mean-flow estimate
/// on random `(Q₁, Q₂, x₁, x₂)` over `t ∈ [δ, δ + 10/β]`.
pub fn lipschitz_certificate(sol: &RiccatiSolution, delta: f64) -> Result<LipschitzReport> {
    let dc = decay_constants(sol, delta)?;
    let r = sol.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x11be);
    let (alpha, beta, chi) = (dc.alpha, dc.beta, dc.chi_delta);
    let delta_inf_norm = spectral_norm(&sol.delta_inf);
    let mut cov_ratio: f64 = 0.0;
    let mut mean_ratio: f64 = 0.0;
    let mut decomp: f64 = 0.0;
    let mut samples = 0;
    let draws = 12;
    for k in 0..draws {
        let q1 = random_psd(&mut rng, r, 10f64.powi(k % 4 - 1), 0.0);
        let q2 = if k == 0 { q1.clone() } else { random_psd(&mut rng, r, 1.0, 0.0) };
        let x1 = random_normal_vector(&mut rng, r) * 2.0;
        let x2 = random_normal_vector(&mut rng, r);
        let dq = spectral_norm(&(&q1 - &q2));
        for j in 0..30 {
            let t = delta + 10.0 / beta * j as f64 / 29.0;
            let at = sol.at(t)?;
            let e_inf = &at.exp_d;
            let f1 = inverse(&sol.f_map_at(&at, &q1)?, "F_t(Q1)")?;
            let f2 = inverse(&sol.f_map_at(&at, &q2)?, "F_t(Q2)")?;
            let phi1 = sol.flow_at(&at, &q1)?;
            let phi2 = sol.flow_at(&at, &q2)?;
            let lhs = spectral_norm(&(&phi1 - &phi2));
            let rhs = (alpha * chi).powi(2) * (-2.0 * beta * t).exp() * dq;
            cov_ratio = cov_ratio.max(ratio(lhs, rhs));
            let dec = e_inf * &f1 * (&q1 - &q2) * (e_inf * &f2).transpose();
            decomp = decomp.max((&phi1 - &phi2 - dec).norm() / (1.0 + lhs));
            let m1 = e_inf * &f1 * &x1;
            let m2 = e_inf * &f2 * &x2;
            let lhs = (m1 - m2).norm();
            let rhs = alpha * chi * (-beta * t).exp()
                * (chi * delta_inf_norm * x1.norm() * dq + (&x1 - &x2).norm());
            mean_ratio = mean_ratio.max(ratio(lhs, rhs));
            samples += 1;
        }
    }
    let passed = cov_ratio <= 1.0 && mean_ratio <= 1.0 && decomp <= 1e-10;
    Ok(LipschitzReport {
        delta,
        samples,
        covariance_ratio: cov_ratio,
        mean_ratio,
        decomposition_residual: decomp,
        passed,
    })
}

/// `lhs / rhs` with round-off sized left sides counted as zero.
fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs <= 1e-13 {
        0.0
    } else {
        lhs / rhs
    }
}
