//! Ensemble Kalman-Bucy samplers for the normalized flow and the particle-flow gain.

use serde::{Deserialize, Serialize};

use super::{drive, matvec, normal, ParticleEnsemble, RunConfig, Trajectory};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{inverse, lambda_min, sqrt_psd, Mat, Vector};
use crate::model::{potential, ModelParams};

/// Sample covariances below this smallest eigenvalue are regularized before inversion.
pub const REGULARIZATION_FLOOR: f64 = 1e-10;
pub const REGULARIZATION_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnkfVariant {
    /// `dξ = (A − PS)ξ dt + P S^{1/2} dW + B dW̄`.
    Vanilla,
    /// `dξ = (Aξ − ½ PS(ξ + m)) dt + B dW̄`.
    Deterministic,
    /// `dξ = (Aξ − ½ PS(ξ + m) + ½(R + M)P⁻¹(ξ − m)) dt` with `M` skew, no noise.
    Transport {
        #[serde(with = "crate::linalg::serde_mat")]
        skew: Mat,
    },
}

impl EnkfVariant {
    pub fn transport(dim: usize) -> Self {
        EnkfVariant::Transport { skew: Mat::zeros(dim, dim) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnkfVariant::Vanilla => "enkf1",
            EnkfVariant::Deterministic => "enkf2",
            EnkfVariant::Transport { .. } => "enkf3",
        }
    }
}

/// `U(x) = −½ P S (x + m)`.
pub fn fpf_gain(s: &Mat, eta: &GaussianState, x: &Vector) -> Vector {
    -0.5 * &eta.cov * s * (x + &eta.mean)
}

/// Full particle-flow drift `A x + U(x)`.
pub fn fpf_drift(p: &ModelParams, eta: &GaussianState, x: &Vector) -> Vector {
    &p.a * x + fpf_gain(&p.s, eta, x)
}

/// `div U + U·∇log g − (V − η(V))` at `x`, with `g` the density of `η` and the
/// divergence taken by central differences of step `h`.
pub fn fpf_poisson_residual(p: &ModelParams, eta: &GaussianState, x: &Vector, h: f64) -> Result<f64> {
    let r = p.dim;
    let mut div = 0.0;
    for i in 0..r {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        div += (fpf_gain(&p.s, eta, &xp)[i] - fpf_gain(&p.s, eta, &xm)[i]) / (2.0 * h);
    }
    let prec = eta.precision()?;
    let grad_log = -(&prec * (x - &eta.mean));
    let u = fpf_gain(&p.s, eta, x);
    let eta_v = 0.5 * (eta.mean.dot(&(&p.s * &eta.mean)) + (&p.s * &eta.cov).trace());
    Ok(div + u.dot(&grad_log) - (potential(p, x) - eta_v))
}

fn check_variant(p: &ModelParams, v: &EnkfVariant) -> Result<()> {
    if let EnkfVariant::Transport { skew } = v {
        if skew.nrows() != p.dim || skew.ncols() != p.dim {
            return Err(Error::Dimension(format!("skew matrix must be {0}×{0}", p.dim)));
        }
        let asym = (skew + skew.transpose()).norm();
        if asym > 1e-12 * (1.0 + skew.norm()) {
            return Err(Error::Domain(format!("M must be skew-symmetric (‖M + M′‖ = {asym:e})")));
        }
    }
    Ok(())
}

/// `P⁻¹`, adding jitter when the sample covariance is nearly singular.
fn regularized_inverse(p: &Mat) -> Result<(Mat, bool)> {
    let r = p.nrows();
    if lambda_min(p) < REGULARIZATION_FLOOR {
        let j = p + Mat::identity(r, r) * REGULARIZATION_JITTER;
        Ok((inverse(&j, "regularized ensemble covariance")?, true))
    } else {
        Ok((inverse(p, "ensemble covariance")?, false))
    }
}

/// Transport drift of every walker for the flat configuration `x`.
fn transport_field(p: &ModelParams, skew: &Mat, x: &[f64], events: &mut u64) -> Result<Vec<f64>> {
    let r = p.dim;
    let ens = ParticleEnsemble::from_flat(r, x.to_vec());
    let m = ens.mean();
    let cov = ens.cov();
    let (inv, reg) = regularized_inverse(&cov)?;
    if reg {
        *events += 1;
    }
    let half_ps = 0.5 * &cov * &p.s;
    let corr = 0.5 * (&p.r + skew) * inv;
    let lin = &p.a - &half_ps + &corr;
    let offset = -(&half_ps * &m) - &corr * &m;
    let mut out = vec![0.0; x.len()];
    for (xi, oi) in x.chunks(r).zip(out.chunks_mut(r)) {
        matvec(&lin, xi, oi);
        for k in 0..r {
            oi[k] += offset[k];
        }
    }
    Ok(out)
}

/// Runs the chosen ensemble Kalman-Bucy variant from an `N`-sample of `η₀`.
///
/// The noisy variants use Euler-Maruyama; the transport variant is integrated by RK4.
pub fn enkf_run(params: &ModelParams, eta0: &GaussianState, variant: &EnkfVariant, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.check(params.dim + 1)?;
    check_variant(params, variant)?;
    if eta0.dim() != params.dim {
        return Err(Error::Dimension(format!("state has dimension {}, model {}", eta0.dim(), params.dim)));
    }
    let mut ens = ParticleEnsemble::sample(eta0, cfg.n, cfg.seed)?;
    let r = params.dim;
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let s_half = sqrt_psd(&params.s)?;
    match variant {
        EnkfVariant::Vanilla | EnkfVariant::Deterministic => {
            let vanilla = matches!(variant, EnkfVariant::Vanilla);
            drive(&mut ens, cfg, &params.s, variant.name(), |ens| {
                let m = ens.mean();
                let cov = ens.cov();
                let ps = &cov * &params.s;
                let (lin, offset) = if vanilla {
                    (&params.a - &ps, Vector::zeros(r))
                } else {
                    (&params.a - 0.5 * &ps, -0.5 * &ps * &m)
                };
                let obs = &cov * &s_half;
                ens.for_each_walker(|x, rng| {
                    let mut drift = vec![0.0; r];
                    matvec(&lin, x, &mut drift);
                    let w: Vec<f64> = if vanilla { (0..r).map(|_| normal(rng) * sq).collect() } else { Vec::new() };
                    let wb: Vec<f64> = (0..params.noise_dim).map(|_| normal(rng) * sq).collect();
                    for i in 0..r {
                        let mut noise = 0.0;
                        for (k, wk) in wb.iter().enumerate() {
                            noise += params.b[(i, k)] * wk;
                        }
                        for (k, wk) in w.iter().enumerate() {
                            noise += obs[(i, k)] * wk;
                        }
                        x[i] += (drift[i] + offset[i]) * dt + noise;
                    }
                });
                Ok(0)
            })
        }
        EnkfVariant::Transport { skew } => drive(&mut ens, cfg, &params.s, variant.name(), |ens| {
            let mut events = 0;
            let x0 = ens.positions.clone();
            let axpy = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + c * v).collect() };
            let k1 = transport_field(params, skew, &x0, &mut events)?;
            let k2 = transport_field(params, skew, &axpy(&x0, &k1, 0.5 * dt), &mut events)?;
            let k3 = transport_field(params, skew, &axpy(&x0, &k2, 0.5 * dt), &mut events)?;
            let k4 = transport_field(params, skew, &axpy(&x0, &k3, dt), &mut events)?;
            for (i, x) in ens.positions.iter_mut().enumerate() {
                *x += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            Ok(events)
        }),
    }
}
