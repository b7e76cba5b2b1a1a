//! Interacting-jump diffusion Monte Carlo and the plain killed diffusion.

use rand::Rng;

use super::{drive, free_move, ParticleEnsemble, RunConfig, Trajectory};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{Mat, Vector};
use crate::model::{potential, ModelParams};

fn quad(s: &Mat, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += x[i] * s[(i, j)] * x[j];
        }
    }
    0.5 * acc
}

/// Each step moves every walker by Euler-Maruyama, then kills it with probability
/// `1 − exp(−V dt)` and replaces it by a uniformly drawn walker of the moved pool.
pub fn dmc_run(params: &ModelParams, eta0: &GaussianState, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.check(2)?;
    if eta0.dim() != params.dim {
        return Err(Error::Dimension(format!("state has dimension {}, model {}", eta0.dim(), params.dim)));
    }
    let mut ens = ParticleEnsemble::sample(eta0, cfg.n, cfg.seed)?;
    let n = cfg.n;
    let dt = cfg.dt;
    let r = params.dim;
    drive(&mut ens, cfg, &params.s, "dmc", |ens| {
        let targets: Vec<Option<usize>> = ens.map_walkers(|x, rng| {
            let mut buf = vec![0.0; r];
            free_move(params, x, rng, dt, &mut buf);
            let kill = 1.0 - (-quad(&params.s, x) * dt).exp();
            let u: f64 = rng.random();
            let j = rng.random_range(0..n);
            (u < kill).then_some(j)
        });
        let moved = ens.positions.clone();
        let mut jumps = 0;
        for (i, t) in targets.iter().enumerate() {
            if let Some(j) = *t {
                ens.positions[i * r..(i + 1) * r].copy_from_slice(&moved[j * r..(j + 1) * r]);
                jumps += 1;
            }
        }
        ens.jump_count += jumps;
        Ok(0)
    })
}

/// Survivors of independent killed diffusions.
#[derive(Debug, Clone)]
pub struct KilledSample {
    pub survivors: usize,
    pub total: usize,
    pub law: GaussianState,
    /// Survivor positions, row-major.
    pub positions: Vec<f64>,
}

/// `n` independent copies of the free diffusion killed at rate `V`, no resampling.
pub fn killed_run(params: &ModelParams, eta0: &GaussianState, horizon: f64, dt: f64, n: usize, seed: u64) -> Result<KilledSample> {
    let cfg = RunConfig::new(n, horizon, dt, seed);
    cfg.check(2)?;
    let mut ens = ParticleEnsemble::sample(eta0, n, seed)?;
    let r = params.dim;
    let steps = cfg.steps();
    let alive: Vec<bool> = ens.map_walkers(|x, rng| {
        let mut buf = vec![0.0; r];
        for _ in 0..steps {
            free_move(params, x, rng, dt, &mut buf);
            let u: f64 = rng.random();
            if u >= (-potential_slice(params, x) * dt).exp() {
                return false;
            }
        }
        true
    });
    let mut positions = Vec::new();
    for (i, a) in alive.iter().enumerate() {
        if *a {
            positions.extend_from_slice(ens.walker(i));
        }
    }
    let survivors = positions.len() / r;
    if survivors < 2 {
        return Err(Error::Domain(format!("only {survivors} walkers survived")));
    }
    let mut mean = Vector::zeros(r);
    for x in positions.chunks(r) {
        mean += Vector::from_row_slice(x);
    }
    mean /= survivors as f64;
    let mut cov = Mat::zeros(r, r);
    for x in positions.chunks(r) {
        let d = Vector::from_row_slice(x) - &mean;
        cov += &d * d.transpose();
    }
    cov /= survivors as f64 - 1.0;
    Ok(KilledSample { survivors, total: n, law: GaussianState::new(mean, cov)?, positions })
}

fn potential_slice(p: &ModelParams, x: &[f64]) -> f64 {
    potential(p, &Vector::from_row_slice(x))
}
