//! Sampling the ground-state transformed process `dX = D_h X dt + B dW`.

use serde::{Deserialize, Serialize};

use super::{drive, free_move, matvec, normal, ParticleEnsemble, RunConfig, Trajectory};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::ground_state::{h_process_moments, GroundState};
use crate::linalg::{expm, sqrt_psd, symmetrize, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HprocScheme {
    /// Exact Ornstein-Uhlenbeck transition.
    Exact,
    Euler,
}

pub fn hproc_run(gs: &GroundState, eta0: &GaussianState, scheme: HprocScheme, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.check(2)?;
    let r = gs.dim();
    if eta0.dim() != r {
        return Err(Error::Dimension(format!("state has dimension {}, model {r}", eta0.dim())));
    }
    let mut ens = ParticleEnsemble::sample(eta0, cfg.n, cfg.seed)?;
    let dt = cfg.dt;
    let mut hp = gs.params.clone();
    hp.a = gs.drift_h.clone();
    match scheme {
        HprocScheme::Euler => drive(&mut ens, cfg, &gs.params.s, "hproc-euler", |ens| {
            ens.for_each_walker(|x, rng| {
                let mut buf = vec![0.0; r];
                free_move(&hp, x, rng, dt, &mut buf);
            });
            Ok(0)
        }),
        HprocScheme::Exact => {
            let e = expm(&gs.drift_h, dt)?;
            let dh = &gs.delta_inf_h;
            let root = sqrt_psd(&symmetrize(&(dh - &e * dh * e.transpose())))?;
            drive(&mut ens, cfg, &gs.params.s, "hproc", |ens| {
                ens.for_each_walker(|x, rng| {
                    let z: Vec<f64> = (0..r).map(|_| normal(rng)).collect();
                    let mut ex = vec![0.0; r];
                    let mut lz = vec![0.0; r];
                    matvec(&e, x, &mut ex);
                    matvec(&root, &z, &mut lz);
                    for i in 0..r {
                        x[i] = ex[i] + lz[i];
                    }
                });
                Ok(0)
            })
        }
    }
}

/// Gap between the Euler-Maruyama moment recursion over `steps` steps and the exact
/// h-process moments at `t`, mean and covariance combined.
pub fn euler_moment_error(gs: &GroundState, x0: &GaussianState, t: f64, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let r = gs.dim();
    let dt = t / steps as f64;
    let g = Mat::identity(r, r) + &gs.drift_h * dt;
    let rdt = &gs.params.r * dt;
    let mut m = x0.mean.clone();
    let mut c = x0.cov.clone();
    for _ in 0..steps {
        m = &g * m;
        c = &g * c * g.transpose() + &rdt;
    }
    let exact = h_process_moments(gs, x0, t)?;
    Ok((m - &exact.mean).norm() + (c - &exact.cov).norm())
}
