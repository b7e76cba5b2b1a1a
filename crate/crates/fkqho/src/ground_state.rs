//! Ground state `h₀(x) = exp(−½ x′ Q∞ x)`, zero-point energy and the h-process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{self, expm, inverse, lambda_min, sqrt_psd, symmetrize, Mat, Vector};
use crate::model::{potential, ModelParams};
use crate::riccati::{exp_bound, iota, RiccatiSolution};

/// Ground state data derived from a Riccati solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub params: ModelParams,
    pub q_inf: Mat,
    pub p_inf: Mat,
    pub lambda0: f64,
    /// `½ Tr(R Q∞)`, the second route to the zero-point energy.
    pub lambda0_dual: f64,
    pub drift_h: Mat,
    pub p_h_inf: Mat,
    pub delta_inf_h: Mat,
    pub eta_inf: GaussianState,
    pub eta_h_inf: GaussianState,
}

/// Builds the ground state, failing when `½Tr(SP∞)` and `½Tr(RQ∞)` disagree beyond `1e-8`.
pub fn ground_state(sol: &RiccatiSolution) -> Result<GroundState> {
    let p = &sol.params;
    let lambda0 = 0.5 * (&p.s * &sol.p_inf).trace();
    let lambda0_dual = 0.5 * (&p.r * &sol.q_inf).trace();
    if (lambda0 - lambda0_dual).abs() > 1e-8 * (1.0 + lambda0.abs()) {
        return Err(Error::Inconsistency(format!(
            "zero-point energies disagree: ½Tr(SP) = {lambda0}, ½Tr(RQ) = {lambda0_dual}"
        )));
    }
    let p_h_inf = symmetrize(&inverse(
        &(inverse(&sol.p_inf, "P_inf")? + &sol.q_inf),
        "P_inf^-1 + Q_inf",
    )?);
    let r = p.dim;
    Ok(GroundState {
        params: p.clone(),
        q_inf: sol.q_inf.clone(),
        p_inf: sol.p_inf.clone(),
        lambda0,
        lambda0_dual,
        drift_h: sol.drift_h.clone(),
        p_h_inf: p_h_inf.clone(),
        delta_inf_h: sol.delta_inf_h.clone(),
        eta_inf: GaussianState { mean: Vector::zeros(r), cov: sol.p_inf.clone() },
        eta_h_inf: GaussianState { mean: Vector::zeros(r), cov: p_h_inf },
    })
}

impl GroundState {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// `log h₀(x) = −½ x′ Q∞ x`.
    pub fn log_h0(&self, x: &Vector) -> f64 {
        -0.5 * x.dot(&(&self.q_inf * x))
    }

    /// `η∞(h₀) = det(I + P∞ Q∞)^{−1/2}`.
    pub fn eta_inf_h0(&self) -> f64 {
        let r = self.dim();
        (Mat::identity(r, r) + &self.p_inf * &self.q_inf).determinant().powf(-0.5)
    }

    /// `υ(h₀) = det(2π P∞)^{1/2}` for the reversible reference measure.
    pub fn upsilon_h0(&self) -> f64 {
        (&self.p_inf * (2.0 * std::f64::consts::PI)).determinant().sqrt()
    }

    /// `υ(h₀²) = (2π)^{r/2} det(P∞⁻¹ + Q∞)^{−1/2}`.
    pub fn upsilon_h0_sq(&self) -> Result<f64> {
        let r = self.dim() as f64;
        let m = inverse(&self.p_inf, "P_inf")? + &self.q_inf;
        Ok((2.0 * std::f64::consts::PI).powf(0.5 * r) / m.determinant().sqrt())
    }
}

/// `h₀⁻¹ ℒ h₀(x) − V(x) + λ₀` from the gradient and Hessian of `h₀`.
pub fn eigen_residual(gs: &GroundState, x: &Vector) -> f64 {
    let p = &gs.params;
    let qx = &gs.q_inf * x;
    let drift_term = -(&p.a * x).dot(&qx);
    let diffusion_term = 0.5 * qx.dot(&(&p.r * &qx)) - 0.5 * (&p.r * &gs.q_inf).trace();
    drift_term + diffusion_term - potential(p, x) + gs.lambda0
}

/// Boltzmann-Gibbs transform of a Gaussian by `h₀` (`sign = +1`) or `h₀⁻¹` (`sign = −1`).
pub fn bg_transform(gs: &GroundState, eta: &GaussianState, sign: i32) -> Result<GaussianState> {
    boltzmann_gibbs(&gs.q_inf, eta, sign)
}

/// Reweights `N(m, P)` by `exp(∓½ x′ Q x)`.
///
/// Written as `mean ↦ (I ± PQ)⁻¹ m`, `cov ↦ P (I ± QP)⁻¹`, which also covers singular `P`.
pub fn boltzmann_gibbs(q: &Mat, eta: &GaussianState, sign: i32) -> Result<GaussianState> {
    let r = q.nrows();
    if eta.dim() != r {
        return Err(Error::Dimension(format!("state has dimension {}, model {r}", eta.dim())));
    }
    let s = match sign {
        1 => 1.0,
        -1 => -1.0,
        _ => return Err(Error::Domain(format!("sign must be +1 or -1, got {sign}"))),
    };
    if sign == -1 {
        let root = sqrt_psd(&eta.cov)?;
        let slack = if linalg::cond(&eta.cov) < 1e14 {
            lambda_min(&(eta.precision()? - q))
        } else {
            lambda_min(&(Mat::identity(r, r) - &root * q * &root))
        };
        if !(slack > 1e-10) {
            return Err(Error::Precondition(format!(
                "h0^-1 transform needs P^-1 > Q_inf (lambda_min = {slack:e})"
            )));
        }
    }
    let id = Mat::identity(r, r);
    let left = &id + &eta.cov * q * s;
    let right = &id + q * &eta.cov * s;
    let mean = left
        .lu()
        .solve(&eta.mean)
        .ok_or_else(|| Error::Domain("I + PQ is singular".into()))?;
    let cov = symmetrize(&(&eta.cov * inverse(&right, "I + QP")?));
    GaussianState::new(mean, cov)
}

/// Moments of the h-process: mean `e^{tD_h} m`, covariance `e^{tD_h} P e^{tD_h′} + Δ^h_t`.
pub fn h_process_moments(gs: &GroundState, x0: &GaussianState, t: f64) -> Result<GaussianState> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    let e = expm(&gs.drift_h, t)?;
    let dh = &gs.delta_inf_h;
    let delta_t = dh - &e * dh * e.transpose();
    let cov = symmetrize(&(&e * &x0.cov * e.transpose() + delta_t));
    GaussianState::new(&e * &x0.mean, cov)
}

/// `(α_h, β_h)` and `ι_h = ∫₀^∞ ‖e^{t D_h}‖² dt`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct HProcessDecay {
    pub alpha_h: f64,
    pub beta_h: f64,
    pub iota_h: f64,
}

pub fn decay_constants(gs: &GroundState) -> Result<HProcessDecay> {
    let (alpha_h, beta_h) = exp_bound(&gs.drift_h)?;
    Ok(HProcessDecay { alpha_h, beta_h, iota_h: iota(&gs.drift_h, alpha_h, beta_h) })
}

/// JSON export of the ground state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundStateExport {
    #[serde(with = "linalg::serde_mat")]
    pub q_inf: Mat,
    pub lambda0: f64,
    pub lambda0_dual: f64,
    #[serde(with = "linalg::serde_mat")]
    pub drift_h: Mat,
    #[serde(with = "linalg::serde_mat")]
    pub p_h_inf: Mat,
    pub eta_inf: GaussianState,
    pub eta_h_inf: GaussianState,
    pub eta_inf_h0: f64,
}

impl GroundState {
    pub fn to_export(&self) -> GroundStateExport {
        GroundStateExport {
            q_inf: self.q_inf.clone(),
            lambda0: self.lambda0,
            lambda0_dual: self.lambda0_dual,
            drift_h: self.drift_h.clone(),
            p_h_inf: self.p_h_inf.clone(),
            eta_inf: self.eta_inf.clone(),
            eta_h_inf: self.eta_h_inf.clone(),
            eta_inf_h0: self.eta_inf_h0(),
        }
    }
}
