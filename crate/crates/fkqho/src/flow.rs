//! Closed-form normalized Feynman-Kac flows, survival probabilities and Gaussian metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::ground_state::{self, boltzmann_gibbs, h_process_moments, GroundState};
use crate::linalg::{expm, inverse, spectral_norm, sqrt_psd, sym_eigen, symmetrize, Mat, Vector};
use crate::model::is_reversible;
use crate::quadrature::{adaptive_simpson, simpson_samples};
use crate::riccati::{exp_bound, RiccatiSolution};

/// Normalized flow `η_t = Φ_t(η₀)` at one time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub eta_t: GaussianState,
    /// `−∫₀ᵗ η_s(V) ds` by Simpson quadrature.
    pub log_mass: f64,
    /// Same quantity from the Gramian closed form.
    pub log_mass_closed: f64,
    /// `𝔹_{h₀}(η_t)`.
    pub eta_h_t: GaussianState,
    /// Largest gap between the Floquet route and the `Δ_t(0)` route, moments and mass included.
    pub cross_check_gap: f64,
}

fn ensure_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

fn ensure_dim(sol: &RiccatiSolution, eta: &GaussianState) -> Result<()> {
    if eta.dim() != sol.dim() {
        return Err(Error::Dimension(format!("state has dimension {}, model {}", eta.dim(), sol.dim())));
    }
    Ok(())
}

/// `(X̂_t, P_t)` through `ℰ_t(P₀)` and the Floquet form of `φ_t`.
pub fn moments_at(sol: &RiccatiSolution, eta0: &GaussianState, t: f64) -> Result<GaussianState> {
    ensure_time(t)?;
    ensure_dim(sol, eta0)?;
    let at = sol.at(t)?;
    let cov = sol.flow_at(&at, &eta0.cov)?;
    let mean = sol.semigroup_at(&at, &eta0.cov)? * &eta0.mean;
    GaussianState::new(mean, cov)
}

/// `η_s(V) = ½ (X̂_s′ S X̂_s + Tr(S P_s))`.
fn potential_average(sol: &RiccatiSolution, eta: &GaussianState) -> f64 {
    let s = &sol.params.s;
    0.5 * (eta.mean.dot(&(s * &eta.mean)) + (s * &eta.cov).trace())
}

fn default_panels(t: f64) -> usize {
    let n = (1000.0 * t.max(1.0)).ceil() as usize;
    n + n % 2
}

/// `−∫₀ᵗ η_s(V) ds` by composite Simpson on `panels` (even) panels.
pub fn log_mass_quadrature(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, panels: usize) -> Result<f64> {
    ensure_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let n = panels.max(2) + panels % 2;
    let h = t / n as f64;
    let values = (0..=n)
        .map(|k| moments_at(sol, eta0, k as f64 * h).map(|e| potential_average(sol, &e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(-simpson_samples(&values, h))
}

/// `−∫₀ᵗ η_s(V) ds` by adaptive Simpson to absolute tolerance `tol` over unit pieces.
pub fn log_mass_adaptive(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, tol: f64) -> Result<f64> {
    ensure_time(t)?;
    ensure_dim(sol, eta0)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let g = |s: f64| moments_at(sol, eta0, s).map(|e| potential_average(sol, &e)).unwrap_or(f64::NAN);
    let pieces = (4.0 * t).ceil().max(1.0) as usize;
    let h = t / pieces as f64;
    let total: f64 = (0..pieces)
        .map(|k| adaptive_simpson(&g, k as f64 * h, (k + 1) as f64 * h, tol / pieces as f64))
        .sum();
    if !total.is_finite() {
        return Err(Error::Domain("potential average is not finite along the flow".into()));
    }
    Ok(-total)
}

/// `−½ m′ Δ_t 𝔽_t(P)⁻¹ m − ½ t Tr(S P∞) − ½ log det 𝔽_t(P)`.
pub fn log_mass_closed(sol: &RiccatiSolution, eta0: &GaussianState, t: f64) -> Result<f64> {
    ensure_time(t)?;
    ensure_dim(sol, eta0)?;
    let at = sol.at(t)?;
    let f = sol.f_map_at(&at, &eta0.cov)?;
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::Domain(format!("det F_t(P) = {det:e} is not positive")));
    }
    let m = &eta0.mean;
    let quad = m.dot(&(&at.delta * inverse(&f, "F_t(P)")? * m));
    Ok(-0.5 * quad - 0.5 * t * (&sol.params.s * &sol.p_inf).trace() - 0.5 * det.ln())
}

/// `Δ_t(0) = ∫₀ᵗ ℰ_s(0)′ S ℰ_s(0) ds` and `∫₀ᵗ Tr(S φ_s(0)) ds`, both by Simpson.
pub fn dirac_integrals(sol: &RiccatiSolution, t: f64, panels: usize) -> Result<(Mat, f64)> {
    ensure_time(t)?;
    let r = sol.dim();
    if t == 0.0 {
        return Ok((Mat::zeros(r, r), 0.0));
    }
    let n = panels.max(2) + panels % 2;
    let h = t / n as f64;
    let zero = Mat::zeros(r, r);
    let s = &sol.params.s;
    let mut acc = Mat::zeros(r, r);
    let mut traces = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let at = sol.at(k as f64 * h)?;
        let e = sol.semigroup_at(&at, &zero)?;
        let phi = sol.flow_at(&at, &zero)?;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += (e.transpose() * s * &e) * w;
        traces.push((s * phi).trace());
    }
    Ok((symmetrize(&(acc * (h / 3.0))), simpson_samples(&traces, h)))
}

/// `Δ_t(0) = Δ_t 𝔽_t(0)⁻¹`.
pub fn delta_zero_closed(sol: &RiccatiSolution, t: f64) -> Result<Mat> {
    let at = sol.at(t)?;
    let f = sol.f_map_at(&at, &Mat::zeros(sol.dim(), sol.dim()))?;
    Ok(symmetrize(&(&at.delta * inverse(&f, "F_t(0)")?)))
}

/// The alternative parametrization through the Dirac flow:
/// `X̂_t = ℰ_t(0)(I + PΔ_t(0))⁻¹ m`, `P_t = φ_t(0) + ℰ_t(0)(I + PΔ_t(0))⁻¹ P ℰ_t(0)′`.
pub fn moments_via_dirac(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, delta0: &Mat) -> Result<GaussianState> {
    ensure_dim(sol, eta0)?;
    let r = sol.dim();
    let zero = Mat::zeros(r, r);
    let at = sol.at(t)?;
    let e0 = sol.semigroup_at(&at, &zero)?;
    let phi0 = sol.flow_at(&at, &zero)?;
    let g = inverse(&(Mat::identity(r, r) + &eta0.cov * delta0), "I + P Delta_t(0)")?;
    let mean = &e0 * &g * &eta0.mean;
    let cov = symmetrize(&(phi0 + &e0 * &g * &eta0.cov * e0.transpose()));
    GaussianState::new(mean, cov)
}

/// Propagates a Gaussian state to time `t`, with both parametrizations and both masses.
pub fn propagate(sol: &RiccatiSolution, eta0: &GaussianState, t: f64) -> Result<FlowState> {
    propagate_with(sol, eta0, t, default_panels(t))
}

pub fn propagate_with(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, panels: usize) -> Result<FlowState> {
    let eta_t = moments_at(sol, eta0, t)?;
    let log_mass = log_mass_adaptive(sol, eta0, t, 1e-12)?;
    let closed = log_mass_closed(sol, eta0, t)?;
    let (delta0, _) = dirac_integrals(sol, t, panels)?;
    let alt = moments_via_dirac(sol, eta0, t, &delta0)?;
    let gap = eta_t.gap(&alt).max((log_mass - closed).abs());
    let eta_h_t = boltzmann_gibbs(&sol.q_inf, &eta_t, 1)?;
    Ok(FlowState { t, eta_t, log_mass, log_mass_closed: closed, eta_h_t, cross_check_gap: gap })
}

/// Flow states on `steps + 1` equally spaced times in `[0, T]`, masses accumulated by Simpson
/// on a grid with two panels per step.
pub fn flow_path(sol: &RiccatiSolution, eta0: &GaussianState, horizon: f64, steps: usize) -> Result<Vec<FlowState>> {
    ensure_time(horizon)?;
    ensure_dim(sol, eta0)?;
    if steps == 0 {
        return Err(Error::Domain("flow path needs at least one step".into()));
    }
    let h = horizon / (2 * steps) as f64;
    let values = (0..=2 * steps)
        .map(|k| moments_at(sol, eta0, k as f64 * h).map(|e| potential_average(sol, &e)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut mass = 0.0;
    for k in 0..=steps {
        if k > 0 {
            mass -= h / 3.0 * (values[2 * k - 2] + 4.0 * values[2 * k - 1] + values[2 * k]);
        }
        let t = 2.0 * k as f64 * h;
        let eta_t = moments_at(sol, eta0, t)?;
        let closed = log_mass_closed(sol, eta0, t)?;
        let eta_h_t = boltzmann_gibbs(&sol.q_inf, &eta_t, 1)?;
        out.push(FlowState {
            t,
            eta_t,
            log_mass: mass,
            log_mass_closed: closed,
            eta_h_t,
            cross_check_gap: (mass - closed).abs(),
        });
    }
    Ok(out)
}

/// `P(τ > t)` and the rate `−(1/t) log P(τ > t)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Survival {
    pub t: f64,
    pub probability: f64,
    pub log_probability: f64,
    pub rate: f64,
}

pub fn survival_probability(sol: &RiccatiSolution, eta0: &GaussianState, t: f64) -> Result<Survival> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("survival rate needs t > 0, got {t}")));
    }
    let lp = log_mass_adaptive(sol, eta0, t, 1e-12)?;
    Ok(Survival { t, probability: lp.exp(), log_probability: lp, rate: -lp / t })
}

/// Both routes to `e^{λ₀t} 𝒦_t(1)(x)` and the correction factor `k_t(x)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KtValue {
    pub t: f64,
    #[serde(with = "crate::linalg::serde_vec")]
    pub x: Vector,
    pub k: f64,
    /// `exp(λ₀t − ½ x′Δ_t(0)x − ½∫₀ᵗ Tr(Sφ_s(0)) ds)` by quadrature.
    pub feynman_kac: f64,
    /// `h₀(x) k_t(x) / η∞(h₀)`.
    pub ground_state: f64,
    pub relative_gap: f64,
}

/// `k_t(x) = (det(I + φ_t(0)Q∞) / det(I + P∞Q∞))^{1/2} exp(½ X̂′(I + Q∞φ_t(0))⁻¹ Q∞ X̂)`
/// with `X̂ = ℰ_t(0) x`.
pub fn kt_value(sol: &RiccatiSolution, t: f64) -> Result<impl Fn(&Vector) -> f64> {
    ensure_time(t)?;
    let r = sol.dim();
    let zero = Mat::zeros(r, r);
    let at = sol.at(t)?;
    let e0 = sol.semigroup_at(&at, &zero)?;
    let phi0 = sol.flow_at(&at, &zero)?;
    let id = Mat::identity(r, r);
    let q = &sol.q_inf;
    let ratio = (&id + &phi0 * q).determinant() / (&id + &sol.p_inf * q).determinant();
    let inner = inverse(&(&id + q * &phi0), "I + Q phi_t(0)")? * q;
    let log_pref = 0.5 * ratio.ln();
    Ok(move |x: &Vector| {
        let xh = &e0 * x;
        (log_pref + 0.5 * xh.dot(&(&inner * &xh))).exp()
    })
}

pub fn kt_function(sol: &RiccatiSolution, gs: &GroundState, t: f64, xs: &[Vector]) -> Result<Vec<KtValue>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("k_t needs t > 0, got {t}")));
    }
    let k = kt_value(sol, t)?;
    let panels = (400.0 * t.max(1.0)).ceil() as usize;
    let (delta0, trace_int) = dirac_integrals(sol, t, panels)?;
    let norm = gs.eta_inf_h0();
    xs.iter()
        .map(|x| {
            if x.len() != sol.dim() {
                return Err(Error::Dimension(format!("point has dimension {}, model {}", x.len(), sol.dim())));
            }
            let kv = k(x);
            let fk = (gs.lambda0 * t - 0.5 * x.dot(&(&delta0 * x)) - 0.5 * trace_int).exp();
            let gsr = gs.log_h0(x).exp() * kv / norm;
            Ok(KtValue {
                t,
                x: x.clone(),
                k: kv,
                feynman_kac: fk,
                ground_state: gsr,
                relative_gap: (fk - gsr).abs() / fk.abs().max(gsr.abs()).max(1e-300),
            })
        })
        .collect()
}

/// Empirical constant `c_δ` for `exp(−c e^{−2βt}) ≤ k_t(x) ≤ exp(c (1+‖x‖²) e^{−2βt})`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KtEnvelope {
    pub delta: f64,
    pub beta: f64,
    /// Fitted on the first half of the time grid.
    pub c_delta: f64,
    /// Largest required constant on the second half, at most `c_delta` when the envelope holds.
    pub c_holdout: f64,
    pub passed: bool,
}

pub fn kt_envelope(sol: &RiccatiSolution, delta: f64, xs: &[Vector], times: usize) -> Result<KtEnvelope> {
    if !(delta > 0.0) || times < 2 {
        return Err(Error::Domain("envelope needs delta > 0 and at least two times".into()));
    }
    let (_, beta) = exp_bound(&sol.drift_filter)?;
    let horizon = delta + 10.0 / beta;
    let need = |t: f64| -> Result<f64> {
        let k = kt_value(sol, t)?;
        let scale = (-2.0 * beta * t).exp();
        Ok(xs.iter().fold(0.0f64, |c, x| {
            let lk = k(x).ln();
            let lower = -lk / scale;
            let upper = lk / ((1.0 + x.norm_squared()) * scale);
            c.max(lower).max(upper)
        }))
    };
    // Even grid points and the horizon fit c_δ; odd points and a far tail are held out.
    let mut fit: f64 = 0.0;
    let mut hold: f64 = 0.0;
    for i in 0..times {
        let t = delta + (horizon - delta) * i as f64 / (times - 1) as f64;
        let c = need(t)?;
        if i % 2 == 0 || i == times - 1 {
            fit = fit.max(c);
        } else {
            hold = hold.max(c);
        }
    }
    hold = hold.max(need(delta + 20.0 / beta)?);
    Ok(KtEnvelope { delta, beta, c_delta: fit, c_holdout: hold, passed: hold <= fit * (1.0 + 1e-6) + 1e-12 })
}

/// `Ent(ν₁ | ν₂)`; infinite when `ν₁` is degenerate.
pub fn gaussian_kl(nu1: &GaussianState, nu2: &GaussianState) -> Result<f64> {
    same_dim(nu1, nu2)?;
    let inv_root = crate::linalg::inv_sqrt_pd(&nu2.cov)?;
    let m = symmetrize(&(&inv_root * &nu1.cov * &inv_root));
    let (mu, _) = sym_eigen(&m);
    if mu.iter().any(|&v| v <= 0.0) {
        return Ok(f64::INFINITY);
    }
    let cov_part: f64 = mu.iter().map(|&v| (v - 1.0) - (v - 1.0).ln_1p()).sum();
    let d = &inv_root * (&nu1.mean - &nu2.mean);
    Ok(0.5 * (cov_part + d.norm_squared()))
}

/// `𝕎₂(ν₁, ν₂)` by the Bures formula.
pub fn gaussian_w2(nu1: &GaussianState, nu2: &GaussianState) -> Result<f64> {
    same_dim(nu1, nu2)?;
    let root2 = sqrt_psd(&nu2.cov)?;
    let cross = sqrt_psd(&symmetrize(&(&root2 * &nu1.cov * &root2)))?;
    let bures = (&nu1.cov + &nu2.cov - cross * 2.0).trace().max(0.0);
    Ok(((&nu1.mean - &nu2.mean).norm_squared() + bures).sqrt())
}

/// `𝒥(ν₁ | ν₂) = Tr(C P₁ C′) + ‖P₂⁻¹(m₁ − m₂)‖²`, `C = P₂⁻¹ − P₁⁻¹`.
pub fn gaussian_fisher(nu1: &GaussianState, nu2: &GaussianState) -> Result<f64> {
    gaussian_fisher_weighted(nu1, nu2, &Mat::identity(nu1.dim(), nu1.dim()))
}

/// `∫ ∇log(dν₁/dν₂)′ W ∇log(dν₁/dν₂) dν₁ = Tr(W C P₁ C′) + b′ W b`, `b = P₂⁻¹(m₁ − m₂)`.
pub fn gaussian_fisher_weighted(nu1: &GaussianState, nu2: &GaussianState, w: &Mat) -> Result<f64> {
    same_dim(nu1, nu2)?;
    let p1i = nu1.precision()?;
    let p2i = nu2.precision()?;
    let c = &p2i - &p1i;
    let b = &p2i * (&nu1.mean - &nu2.mean);
    Ok((w * &c * &nu1.cov * c.transpose()).trace() + b.dot(&(w * &b)))
}

fn same_dim(a: &GaussianState, b: &GaussianState) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("states have dimensions {} and {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Total variation `½∫|p₁ − p₂|` for 1D Gaussians by Simpson on `±12` standard deviations.
pub fn tv_distance_1d(nu1: &GaussianState, nu2: &GaussianState) -> Result<f64> {
    if nu1.dim() != 1 || nu2.dim() != 1 {
        return Err(Error::Dimension("total variation quadrature is one-dimensional".into()));
    }
    let (m1, s1) = (nu1.mean[0], nu1.cov[(0, 0)].sqrt());
    let (m2, s2) = (nu2.mean[0], nu2.cov[(0, 0)].sqrt());
    let lo = (m1 - 12.0 * s1).min(m2 - 12.0 * s2);
    let hi = (m1 + 12.0 * s1).max(m2 + 12.0 * s2);
    let pdf = |m: f64, s: f64, x: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    Ok(0.5 * crate::quadrature::simpson(|x| (pdf(m1, s1, x) - pdf(m2, s2, x)).abs(), lo, hi, 20000))
}

/// One row of the entropy report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EntropyRow {
    pub t: f64,
    pub ent: f64,
    /// Plain Fisher information.
    pub fisher: f64,
    /// Fisher information weighted by `R`, the quantity in the de Bruijn identity.
    pub fisher_r: f64,
    pub dent_dt: f64,
    pub de_bruijn_residual: f64,
    pub ent_bound: f64,
    pub fisher_bound: f64,
    pub fisher_norm_bound: f64,
    pub log_sobolev_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EntropyReport {
    pub iota_h: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub fd_step: f64,
    pub rows: Vec<EntropyRow>,
    pub max_de_bruijn_residual: f64,
    pub bounds_hold: bool,
}

/// Entropy and Fisher information of `η^h_t` against `η^h∞` on `steps + 1` times in `[0, T]`.
pub fn entropy_decay_report(gs: &GroundState, eta0_h: &GaussianState, horizon: f64, steps: usize) -> Result<EntropyReport> {
    if !is_reversible(&gs.params) {
        return Err(Error::Precondition("entropy report needs a reversible model".into()));
    }
    if steps == 0 {
        return Err(Error::Domain("entropy report needs at least one step".into()));
    }
    let dc = ground_state::decay_constants(gs)?;
    let fd = 1e-3;
    let ent_at = |t: f64| -> Result<f64> { gaussian_kl(&h_process_moments(gs, eta0_h, t)?, &gs.eta_h_inf) };
    let ent0 = ent_at(0.0)?;
    let j0 = gaussian_fisher(eta0_h, &gs.eta_h_inf)?;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for k in 0..=steps {
        let t = horizon * k as f64 / steps as f64;
        let eta = h_process_moments(gs, eta0_h, t)?;
        let ent = gaussian_kl(&eta, &gs.eta_h_inf)?;
        let fisher = gaussian_fisher(&eta, &gs.eta_h_inf)?;
        let fisher_r = gaussian_fisher_weighted(&eta, &gs.eta_h_inf, &gs.params.r)?;
        let dent_dt = if t >= 2.0 * fd {
            (ent_at(t - 2.0 * fd)? - 8.0 * ent_at(t - fd)? + 8.0 * ent_at(t + fd)? - ent_at(t + 2.0 * fd)?) / (12.0 * fd)
        } else {
            (-25.0 * ent + 48.0 * ent_at(t + fd)? - 36.0 * ent_at(t + 2.0 * fd)? + 16.0 * ent_at(t + 3.0 * fd)?
                - 3.0 * ent_at(t + 4.0 * fd)?)
                / (12.0 * fd)
        };
        let res = (dent_dt + 0.5 * fisher_r).abs();
        worst = worst.max(res);
        let en = spectral_norm(&expm(&gs.drift_h, t)?);
        let row = EntropyRow {
            t,
            ent,
            fisher,
            fisher_r,
            dent_dt,
            de_bruijn_residual: res,
            ent_bound: (-t / dc.iota_h).exp() * ent0,
            fisher_bound: dc.alpha_h * dc.alpha_h * (-2.0 * dc.beta_h * t).exp() * j0,
            fisher_norm_bound: en * en * j0,
            log_sobolev_bound: 0.5 * dc.iota_h * fisher,
        };
        let slack = |v: f64, b: f64| v <= b * (1.0 + 1e-9) + 1e-14;
        ok &= slack(row.ent, row.ent_bound)
            && slack(row.fisher, row.fisher_bound)
            && slack(row.fisher, row.fisher_norm_bound)
            && slack(row.ent, row.log_sobolev_bound);
        rows.push(row);
    }
    Ok(EntropyReport {
        iota_h: dc.iota_h,
        alpha_h: dc.alpha_h,
        beta_h: dc.beta_h,
        fd_step: fd,
        rows,
        max_de_bruijn_residual: worst,
        bounds_hold: ok,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StabilityRow {
    pub t: f64,
    pub w2: f64,
    pub ent: f64,
    pub pinsker: f64,
    /// One-dimensional total variation by quadrature, absent otherwise.
    pub tv: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StabilityReport {
    pub beta: f64,
    pub window: (f64, f64),
    pub w2_slope: f64,
    pub ent_slope: f64,
    /// Earliest sampled time after which `Ent_t e^{2βt}` stays within 15% of its last value.
    pub entropy_threshold: Option<f64>,
    pub rows: Vec<StabilityRow>,
}

/// Least-squares slope of `log y` against `t` over positive finite samples.
pub fn log_slope(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(sxy / sxx)
}

/// `𝕎₂` and `Ent` between `Φ_t(η₀)` and `Φ_t(μ₀)` on `[0, T]`, with slopes fitted on `[5/β, 10/β]`.
pub fn stability_report(sol: &RiccatiSolution, eta0: &GaussianState, mu0: &GaussianState, horizon: f64, steps: usize) -> Result<StabilityReport> {
    if steps == 0 {
        return Err(Error::Domain("stability report needs at least one step".into()));
    }
    let (_, beta) = exp_bound(&sol.drift_filter)?;
    let window = (5.0 / beta, 10.0 / beta);
    let one_d = sol.dim() == 1;
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = horizon * k as f64 / steps as f64;
        let a = moments_at(sol, eta0, t)?;
        let b = moments_at(sol, mu0, t)?;
        let ent = gaussian_kl(&a, &b)?;
        let tv = if one_d && t > 0.0 { Some(tv_distance_1d(&a, &b)?) } else { None };
        rows.push(StabilityRow { t, w2: gaussian_w2(&a, &b)?, ent, pinsker: (0.5 * ent).sqrt(), tv });
    }
    let inside: Vec<&StabilityRow> = rows.iter().filter(|r| r.t >= window.0 - 1e-12 && r.t <= window.1 + 1e-12).collect();
    let ts: Vec<f64> = inside.iter().map(|r| r.t).collect();
    let w2_slope = log_slope(&ts, &inside.iter().map(|r| r.w2).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let ent_slope = log_slope(&ts, &inside.iter().map(|r| r.ent).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let scaled: Vec<f64> = rows.iter().map(|r| r.ent * (2.0 * beta * r.t).exp()).collect();
    let last = *scaled.last().unwrap_or(&0.0);
    let entropy_threshold = if last > 0.0 && last.is_finite() {
        let mut idx = scaled.len();
        while idx > 0 && (scaled[idx - 1] - last).abs() <= 0.15 * last {
            idx -= 1;
        }
        rows.get(idx).map(|r| r.t)
    } else {
        None
    };
    Ok(StabilityReport { beta, window, w2_slope, ent_slope, entropy_threshold, rows })
}

/// Checks `𝔹_{h₀}(η_t) = η^h_t` and `λ₀t + log P(τ>t) = log η₀(h₀) + log η^h_t(h₀⁻¹)`;
/// returns the moment gap and the mass gap.
pub fn conjugation_check(sol: &RiccatiSolution, gs: &GroundState, eta0: &GaussianState, t: f64) -> Result<(f64, f64)> {
    let fs = propagate(sol, eta0, t)?;
    let eta0_h = boltzmann_gibbs(&gs.q_inf, eta0, 1)?;
    let eta_h = h_process_moments(gs, &eta0_h, t)?;
    let moment_gap = fs.eta_h_t.gap(&eta_h);
    let lhs = gs.lambda0 * t + fs.log_mass;
    let rhs = eta0.log_quadratic_exp_moment(&gs.q_inf)? + eta_h.log_quadratic_exp_moment(&(-&gs.q_inf))?;
    Ok((moment_gap, (lhs - rhs).abs()))
}

/// `‖e^{λ₀t}𝒦_t(1) − h₀/η∞(h₀)‖²_{2,υ}` and `e^{−2λ₁^h t}(υ(1) − υ(h₀)²/υ(h₀²))` for
/// reversible Hurwitz `A`, where `υ(dx) = exp(x′R⁻¹Ax) dx` is finite.
pub fn upsilon_decay(sol: &RiccatiSolution, gs: &GroundState, lambda1_h: f64, t: f64) -> Result<(f64, f64)> {
    let p = &sol.params;
    let r = p.dim;
    let w = -(inverse(&p.r, "R")? * &p.a) * 2.0;
    let w = symmetrize(&w);
    if !(crate::linalg::lambda_min(&w) > 0.0) {
        return Err(Error::Precondition("reference measure is infinite unless A is Hurwitz".into()));
    }
    let gauss = |m: &Mat| -> Result<f64> {
        let m = symmetrize(m);
        if !(crate::linalg::lambda_min(&m) > 0.0) {
            return Err(Error::Domain("divergent Gaussian integral".into()));
        }
        Ok(((2.0 * std::f64::consts::PI).powi(r as i32) / m.determinant()).sqrt())
    };
    let panels = (400.0 * t.max(1.0)).ceil() as usize;
    let (delta0, trace_int) = dirac_integrals(sol, t, panels)?;
    let c1 = gs.lambda0 * t - 0.5 * trace_int;
    let c2 = -gs.eta_inf_h0().ln();
    let q = &gs.q_inf;
    let i11 = gauss(&(&delta0 * 2.0 + &w))?;
    let i12 = gauss(&(&delta0 + q + &w))?;
    let i22 = gauss(&(q * 2.0 + &w))?;
    let lhs = (2.0 * c1).exp() * i11 - 2.0 * (c1 + c2).exp() * i12 + (2.0 * c2).exp() * i22;
    let ups1 = gauss(&w)?;
    let rhs = (-2.0 * lambda1_h * t).exp() * (ups1 - gs.upsilon_h0().powi(2) / gs.upsilon_h0_sq()?);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::ground_state;
    use crate::model::ModelParams;
    use crate::riccati::solve_care;

    fn ou() -> RiccatiSolution {
        solve_care(&ModelParams::scalar(0.0, 1.0, 1.0).unwrap()).unwrap()
    }

    fn random_model(seed: u64, r: usize) -> ModelParams {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = crate::linalg::random_normal_matrix(&mut rng, r, r) * 0.6;
        let b = crate::linalg::random_normal_matrix(&mut rng, r, r);
        let s = crate::linalg::random_psd(&mut rng, r, 1.0, 0.1);
        ModelParams::new(a, b, s).unwrap()
    }

    #[test]
    fn stationary_start_is_fixed() {
        let sol = ou();
        let gs = ground_state(&sol).unwrap();
        for t in [0.5, 3.0, 10.0] {
            let fs = propagate(&sol, &gs.eta_inf, t).unwrap();
            assert!(fs.eta_t.gap(&gs.eta_inf) < 1e-12);
            assert!((fs.log_mass + 0.5 * t).abs() < 1e-12);
            assert!(fs.cross_check_gap < 1e-8);
        }
    }

    #[test]
    fn scalar_examples() {
        let sol = ou();
        let fs = propagate(&sol, &GaussianState::dirac(Vector::zeros(1)), 1.3).unwrap();
        assert!((fs.eta_t.cov[(0, 0)] - 1.3f64.tanh()).abs() < 1e-12);
        assert_eq!(fs.eta_t.mean[0], 0.0);
        assert!((fs.log_mass + 0.5 * 1.3f64.cosh().ln()).abs() < 1e-10);
        let fs = propagate(&sol, &GaussianState::scalar(2.0, 1.0).unwrap(), 0.7).unwrap();
        assert!((fs.eta_t.mean[0] - 2.0 * (-0.7f64).exp()).abs() < 1e-12);
        assert!((fs.eta_t.cov[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn both_parametrizations_agree() {
        for seed in 0..4 {
            let p = random_model(seed, 3);
            let sol = solve_care(&p).unwrap();
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let cov = crate::linalg::random_psd(&mut rng, 3, 1.0, 0.0);
            let eta0 = GaussianState::new(crate::linalg::random_normal_vector(&mut rng, 3), cov).unwrap();
            for t in [0.2, 1.5, 4.0] {
                let fs = propagate(&sol, &eta0, t).unwrap();
                assert!(fs.cross_check_gap < 1e-8, "seed {seed} t {t}: {}", fs.cross_check_gap);
            }
            let d = dirac_integrals(&sol, 2.0, 800).unwrap().0;
            assert!((d - delta_zero_closed(&sol, 2.0).unwrap()).norm() < 1e-9);
        }
    }

    #[test]
    fn gaussian_semigroup_property() {
        let sol = solve_care(&random_model(7, 2)).unwrap();
        let eta0 = GaussianState::new(Vector::from_vec(vec![1.0, -0.5]), Mat::identity(2, 2) * 0.3).unwrap();
        let direct = propagate(&sol, &eta0, 2.5).unwrap();
        let mid = propagate(&sol, &eta0, 1.0).unwrap();
        let two = propagate(&sol, &mid.eta_t, 1.5).unwrap();
        assert!(direct.eta_t.gap(&two.eta_t) < 1e-8);
        assert!((direct.log_mass - mid.log_mass - two.log_mass).abs() < 1e-8);
    }

    #[test]
    fn dirac_limits_reach_eta_inf() {
        let sol = solve_care(&random_model(3, 2)).unwrap();
        let (_, beta) = exp_bound(&sol.drift_filter).unwrap();
        for x in [[0.0, 0.0], [3.0, -1.0], [-5.0, 4.0]] {
            let eta = moments_at(&sol, &GaussianState::dirac(Vector::from_vec(x.to_vec())), 40.0 / beta).unwrap();
            assert!(eta.gap(&GaussianState { mean: Vector::zeros(2), cov: sol.p_inf.clone() }) < 1e-8);
        }
    }

    #[test]
    fn survival_examples() {
        let sol = ou();
        let gs = ground_state(&sol).unwrap();
        for t in [0.1, 1.0, 7.0] {
            let s = survival_probability(&sol, &gs.eta_inf, t).unwrap();
            assert!((s.rate - 0.5).abs() < 1e-12);
            assert!((s.probability - (-t / 2.0).exp()).abs() < 1e-12);
        }
        let d0 = GaussianState::dirac(Vector::zeros(1));
        let s = survival_probability(&sol, &d0, 10.0).unwrap();
        assert!((s.rate - 0.5).abs() < 0.05);
        let eta = GaussianState::scalar(1.5, 0.4).unwrap();
        let s = survival_probability(&sol, &eta, 1e-6).unwrap();
        assert!((s.rate - 0.5 * (1.5 * 1.5 + 0.4)).abs() < 1e-5);
    }

    #[test]
    fn kt_examples() {
        let sol = ou();
        let gs = ground_state(&sol).unwrap();
        let o = vec![Vector::zeros(1)];
        let v = &kt_function(&sol, &gs, 1.0, &o).unwrap()[0];
        assert!((v.k - ((1.0 + 1f64.tanh()) / 2.0).sqrt()).abs() < 1e-12);
        let v = &kt_function(&sol, &gs, 30.0, &o).unwrap()[0];
        assert!((v.k - 1.0).abs() < 1e-10);
        assert!((gs.eta_inf_h0() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn kt_routes_agree() {
        for seed in [1, 2] {
            let sol = solve_care(&random_model(seed, 2)).unwrap();
            let gs = ground_state(&sol).unwrap();
            let xs: Vec<Vector> = [[0.0, 0.0], [1.0, -0.5], [-2.0, 1.5]].iter().map(|v| Vector::from_vec(v.to_vec())).collect();
            for t in [0.3, 2.0, 6.0] {
                for v in kt_function(&sol, &gs, t, &xs).unwrap() {
                    assert!(v.relative_gap < 1e-8, "seed {seed} t {t}: {v:?}");
                }
            }
            let grid: Vec<Vector> = (0..9).map(|k| Vector::from_vec(vec![-2.0 + 0.5 * k as f64, 1.0])).collect();
            assert!(kt_envelope(&sol, 0.1, &grid, 40).unwrap().passed);
        }
    }

    #[test]
    fn kl_examples() {
        let n01 = GaussianState::scalar(0.0, 1.0).unwrap();
        let n02 = GaussianState::scalar(0.0, 2.0).unwrap();
        let n11 = GaussianState::scalar(1.0, 1.0).unwrap();
        assert_eq!(gaussian_kl(&n01, &n01).unwrap(), 0.0);
        assert!((gaussian_kl(&n01, &n02).unwrap() - 0.5 * (0.5 - 1.0 + 2f64.ln())).abs() < 1e-14);
        assert!((gaussian_kl(&n11, &n01).unwrap() - 0.5).abs() < 1e-15);
        assert!(gaussian_kl(&n01, &n02).unwrap() != gaussian_kl(&n02, &n01).unwrap());
        assert!(gaussian_kl(&GaussianState::dirac(Vector::zeros(1)), &n01).unwrap().is_infinite());
    }

    #[test]
    fn w2_examples() {
        let n01 = GaussianState::scalar(0.0, 1.0).unwrap();
        assert!(gaussian_w2(&n01, &n01).unwrap() < 1e-15);
        assert!((gaussian_w2(&GaussianState::scalar(0.0, 4.0).unwrap(), &n01).unwrap() - 1.0).abs() < 1e-14);
        let p = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = GaussianState::new(Vector::from_vec(vec![1.0, 2.0]), p.clone()).unwrap();
        let b = GaussianState::new(Vector::from_vec(vec![-1.0, 0.0]), p).unwrap();
        assert!((gaussian_w2(&a, &b).unwrap() - 8f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn fisher_examples() {
        let n01 = GaussianState::scalar(0.0, 1.0).unwrap();
        assert_eq!(gaussian_fisher(&n01, &n01).unwrap(), 0.0);
        assert!((gaussian_fisher(&GaussianState::scalar(1.0, 1.0).unwrap(), &n01).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fisher_matches_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let nu1 = GaussianState::new(Vector::from_vec(vec![0.5, -1.0]), Mat::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8])).unwrap();
        let nu2 = GaussianState::new(Vector::from_vec(vec![0.0, 0.3]), Mat::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 2.0])).unwrap();
        let exact = gaussian_fisher(&nu1, &nu2).unwrap();
        let root = nu1.affine_root().unwrap();
        let (p1i, p2i) = (nu1.precision().unwrap(), nu2.precision().unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            let x = &nu1.mean + &root * z;
            let g = -(&p1i * (&x - &nu1.mean)) + &p2i * (&x - &nu2.mean);
            let v = g.norm_squared();
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "mc {mean} exact {exact} se {se}");
    }

    #[test]
    fn conjugation_holds() {
        let sol = solve_care(&random_model(11, 3)).unwrap();
        let gs = ground_state(&sol).unwrap();
        let eta0 = GaussianState::new(Vector::from_vec(vec![0.4, -0.2, 1.0]), Mat::identity(3, 3) * 0.5).unwrap();
        for t in [0.5, 2.0, 5.0] {
            let (m, l) = conjugation_check(&sol, &gs, &eta0, t).unwrap();
            assert!(m < 1e-8 && l < 1e-8, "t {t}: {m} {l}");
        }
        let (m, l) = conjugation_check(&sol, &gs, &GaussianState::dirac(Vector::from_vec(vec![1.0, 0.0, -1.0])), 1.0).unwrap();
        assert!(m < 1e-8 && l < 1e-8);
    }

    #[test]
    fn entropy_report_scalar() {
        let sol = ou();
        let gs = ground_state(&sol).unwrap();
        let rep = entropy_decay_report(&gs, &GaussianState::scalar(1.0, 0.5).unwrap(), 5.0, 50).unwrap();
        assert!(rep.bounds_hold);
        assert!(rep.max_de_bruijn_residual <= 1e-4);
        assert!(rep.rows.windows(2).all(|w| w[1].ent < w[0].ent));
        let still = entropy_decay_report(&gs, &gs.eta_h_inf, 2.0, 4).unwrap();
        assert!(still.rows.iter().all(|r| r.ent.abs() < 1e-15 && r.fisher.abs() < 1e-15));
    }

    #[test]
    fn de_bruijn_uses_the_r_weight() {
        let p = ModelParams::from_ars(Mat::from_element(1, 1, -0.5), Mat::from_element(1, 1, 3.0), Mat::from_element(1, 1, 1.0)).unwrap();
        let gs = ground_state(&solve_care(&p).unwrap()).unwrap();
        let rep = entropy_decay_report(&gs, &GaussianState::scalar(1.0, 0.2).unwrap(), 3.0, 30).unwrap();
        assert!(rep.max_de_bruijn_residual <= 1e-4);
        for r in &rep.rows {
            assert!((r.fisher_r - 3.0 * r.fisher).abs() < 1e-12 * (1.0 + r.fisher));
        }
    }

    #[test]
    fn stability_scalar_rates() {
        let sol = ou();
        let rep = stability_report(&sol, &GaussianState::scalar(1.0, 2.0).unwrap(), &GaussianState::scalar(0.0, 1.0).unwrap(), 12.0, 240).unwrap();
        assert!((rep.w2_slope + 1.0).abs() < 0.15, "{}", rep.w2_slope);
        assert!((rep.ent_slope + 2.0).abs() < 0.3, "{}", rep.ent_slope);
        assert!(rep.rows.windows(2).all(|w| w[1].w2 <= w[0].w2));
        for r in rep.rows.iter().skip(1) {
            assert!(r.tv.unwrap() <= r.pinsker + 1e-9);
        }
        let same = stability_report(&sol, &GaussianState::scalar(1.0, 2.0).unwrap(), &GaussianState::scalar(1.0, 2.0).unwrap(), 2.0, 4).unwrap();
        assert!(same.rows.iter().all(|r| r.w2 < 1e-7 && r.ent.abs() < 1e-14));
    }

    #[test]
    fn translation_coupling() {
        let sol = solve_care(&random_model(5, 2)).unwrap();
        let p = Mat::identity(2, 2) * 0.7;
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let y = Vector::from_vec(vec![-0.5, 0.5]);
        let a = GaussianState::new(x.clone(), p.clone()).unwrap();
        let b = GaussianState::new(y.clone(), p.clone()).unwrap();
        for t in [0.5, 2.0] {
            let w = gaussian_w2(&moments_at(&sol, &a, t).unwrap(), &moments_at(&sol, &b, t).unwrap()).unwrap();
            let e = crate::riccati::semigroup_e(&sol, &p, t).unwrap();
            assert!((w - (e * (&x - &y)).norm()).abs() < 1e-7);
        }
    }

    #[test]
    fn upsilon_decay_holds() {
        let p = ModelParams::from_ars(Mat::from_element(1, 1, -0.7), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 2.0)).unwrap();
        let sol = solve_care(&p).unwrap();
        let gs = ground_state(&sol).unwrap();
        let l1 = (0.49f64 + 2.0).sqrt();
        for t in [0.2, 0.5, 1.0, 2.0] {
            let (lhs, rhs) = upsilon_decay(&sol, &gs, l1, t).unwrap();
            assert!(lhs >= -1e-12 && lhs <= rhs * (1.0 + 1e-8), "t {t}: {lhs} {rhs}");
        }
        let flat = ModelParams::scalar(0.0, 1.0, 1.0).unwrap();
        let sol = solve_care(&flat).unwrap();
        assert!(upsilon_decay(&sol, &ground_state(&sol).unwrap(), 1.0, 1.0).is_err());
    }
}
