//! Seeded particle samplers validated against the exact Gaussian flows.
//!
//! Every particle owns a ChaCha stream selected by its index, so trajectories are
//! identical for a given seed whatever the number of worker threads.

mod backward;
mod dmc;
mod enkf;
mod hproc;

pub use backward::{backward_euler_moments, backward_marginal_closed, backward_moments, backward_sample, BackwardMoments};
pub use dmc::{dmc_run, killed_run, KilledSample};
pub use enkf::{enkf_run, fpf_drift, fpf_gain, fpf_poisson_residual, EnkfVariant};
pub use hproc::{euler_moment_error, hproc_run, HprocScheme};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{Mat, Vector};
use crate::model::ModelParams;

/// Sizes, horizon, step and seed shared by every sampler.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// A row is written every `record_every` steps and at the final step.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn new(n: usize, horizon: f64, dt: f64, seed: u64) -> Self {
        Self { n, horizon, dt, seed, record_every: 1 }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn check(&self, min_n: usize) -> Result<()> {
        if self.n < min_n {
            return Err(Error::Domain(format!("need at least {min_n} particles, got {}", self.n)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        if self.record_every == 0 {
            return Err(Error::Domain("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// `N × r` walker positions with one random stream per walker.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Row-major positions, walker `i` at `positions[i*r..(i+1)*r]`.
    pub positions: Vec<f64>,
    pub t: f64,
    pub seed: u64,
    pub log_norm: f64,
    pub jump_count: u64,
    rngs: Vec<ChaCha8Rng>,
}

pub(crate) fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `out = m x` for a row-major slice `x`.
pub(crate) fn matvec(m: &Mat, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += m[(i, j)] * xj;
        }
        *o = acc;
    }
}

impl ParticleEnsemble {
    /// Draws `n` walkers from `eta0` as `m + P^{1/2} z`.
    pub fn sample(eta0: &GaussianState, n: usize, seed: u64) -> Result<Self> {
        let r = eta0.dim();
        let root = eta0.affine_root()?;
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(seed, i)).collect();
        let mut positions = vec![0.0; n * r];
        positions.par_chunks_mut(r).zip(rngs.par_iter_mut()).for_each(|(x, rng)| {
            let z: Vec<f64> = (0..r).map(|_| normal(rng)).collect();
            matvec(&root, &z, x);
            for (xi, mi) in x.iter_mut().zip(eta0.mean.iter()) {
                *xi += mi;
            }
        });
        Ok(Self { dim: r, positions, t: 0.0, seed, log_norm: 0.0, jump_count: 0, rngs })
    }

    /// Wraps existing positions; the result carries no random streams.
    pub(crate) fn from_flat(dim: usize, positions: Vec<f64>) -> Self {
        Self { dim, positions, t: 0.0, seed: 0, log_norm: 0.0, jump_count: 0, rngs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn walker(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> Vector {
        let r = self.dim;
        let mut m = Vector::zeros(r);
        for x in self.positions.chunks(r) {
            for k in 0..r {
                m[k] += x[k];
            }
        }
        m / self.len() as f64
    }

    /// Sample covariance with the `1/(N−1)` normalisation.
    pub fn cov(&self) -> Mat {
        let r = self.dim;
        let m = self.mean();
        let mut c = Mat::zeros(r, r);
        for x in self.positions.chunks(r) {
            for i in 0..r {
                let di = x[i] - m[i];
                for j in 0..=i {
                    c[(i, j)] += di * (x[j] - m[j]);
                }
            }
        }
        for i in 0..r {
            for j in 0..i {
                c[(j, i)] = c[(i, j)];
            }
        }
        c / (self.len() as f64 - 1.0)
    }

    /// `η^N(V)`.
    pub fn mean_potential(&self, s: &Mat) -> f64 {
        let r = self.dim;
        let mut buf = vec![0.0; r];
        let total: f64 = self
            .positions
            .chunks(r)
            .map(|x| {
                matvec(s, x, &mut buf);
                0.5 * x.iter().zip(&buf).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum();
        total / self.len() as f64
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.positions.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Explosion { t: self.t })
        }
    }

    /// Applies `f(walker, rng)` to every walker in parallel.
    pub(crate) fn for_each_walker<F>(&mut self, f: F)
    where
        F: Fn(&mut [f64], &mut ChaCha8Rng) + Sync,
    {
        let r = self.dim;
        self.positions.par_chunks_mut(r).zip(self.rngs.par_iter_mut()).for_each(|(x, rng)| f(x, rng));
    }

    /// Like `for_each_walker`, also returning one value per walker.
    pub(crate) fn map_walkers<T, F>(&mut self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut [f64], &mut ChaCha8Rng) -> T + Sync,
    {
        let r = self.dim;
        self.positions.par_chunks_mut(r).zip(self.rngs.par_iter_mut()).map(|(x, rng)| f(x, rng)).collect()
    }
}

/// Free Euler-Maruyama move `x ← x + A x dt + B √dt z`.
pub(crate) fn free_move(p: &ModelParams, x: &mut [f64], rng: &mut ChaCha8Rng, dt: f64, buf: &mut [f64]) {
    let r = p.dim;
    matvec(&p.a, x, &mut buf[..r]);
    let sq = dt.sqrt();
    let z: Vec<f64> = (0..p.noise_dim).map(|_| normal(rng) * sq).collect();
    for i in 0..r {
        let mut noise = 0.0;
        for (k, zk) in z.iter().enumerate() {
            noise += p.b[(i, k)] * zk;
        }
        x[i] += buf[i] * dt + noise;
    }
}

/// One recorded row of a sampler trajectory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    #[serde(with = "crate::linalg::serde_vec")]
    pub mean: Vector,
    #[serde(with = "crate::linalg::serde_mat")]
    pub cov: Mat,
    /// Average of `η^N_s(V)` over `s ∈ [t/2, t]`.
    pub lambda0_estimate: f64,
    pub jump_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Trajectory {
    pub scheme: String,
    pub config: RunConfig,
    pub rows: Vec<TrajectoryRow>,
    /// `−∫ η^N_s(V) ds` by the left-point rule.
    pub log_norm: f64,
    pub regularization_events: u64,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has at least the initial row")
    }

    pub fn header(dim: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..dim).map(|i| format!("mean_{i}")));
        for i in 0..dim {
            for j in i..dim {
                cols.push(format!("cov_{i}{j}"));
            }
        }
        cols.push("lambda0_estimate".into());
        cols.push("jump_count".into());
        cols.join(",")
    }

    /// CSV with a header row; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let dim = self.rows.first().map_or(0, |r| r.mean.len());
        let mut out = Self::header(dim);
        out.push('\n');
        for row in &self.rows {
            let mut cells = vec![format!("{:?}", row.t)];
            cells.extend(row.mean.iter().map(|v| format!("{v:?}")));
            for i in 0..dim {
                for j in i..dim {
                    cells.push(format!("{:?}", row.cov[(i, j)]));
                }
            }
            cells.push(format!("{:?}", row.lambda0_estimate));
            cells.push(row.jump_count.to_string());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Records ensemble statistics and the running `λ₀` estimate.
pub(crate) struct Recorder {
    potentials: Vec<f64>,
    rows: Vec<TrajectoryRow>,
    log_norm: f64,
    dt: f64,
}

impl Recorder {
    pub(crate) fn new(dt: f64) -> Self {
        Self { potentials: Vec::new(), rows: Vec::new(), log_norm: 0.0, dt }
    }

    /// Adds the potential average at the current step; `record` writes a row.
    pub(crate) fn push(&mut self, ens: &ParticleEnsemble, s: &Mat, record: bool) {
        let v = ens.mean_potential(s);
        if let Some(prev) = self.potentials.last() {
            self.log_norm -= prev * self.dt;
        }
        self.potentials.push(v);
        if record {
            let k = self.potentials.len() - 1;
            let start = k / 2;
            let window = &self.potentials[start..=k];
            let est = window.iter().sum::<f64>() / window.len() as f64;
            self.rows.push(TrajectoryRow {
                t: ens.t,
                mean: ens.mean(),
                cov: ens.cov(),
                lambda0_estimate: est,
                jump_count: ens.jump_count,
            });
        }
    }

    pub(crate) fn finish(self, scheme: &str, config: RunConfig, regularization_events: u64) -> Trajectory {
        Trajectory { scheme: scheme.into(), config, rows: self.rows, log_norm: self.log_norm, regularization_events }
    }
}

/// Runs `step` for every time step, recording rows as configured.
pub(crate) fn drive<F>(ens: &mut ParticleEnsemble, cfg: &RunConfig, s: &Mat, scheme: &str, mut step: F) -> Result<Trajectory>
where
    F: FnMut(&mut ParticleEnsemble) -> Result<u64>,
{
    let steps = cfg.steps();
    let mut rec = Recorder::new(cfg.dt);
    rec.push(ens, s, true);
    let mut events = 0;
    for k in 1..=steps {
        events += step(ens)?;
        ens.t = k as f64 * cfg.dt;
        ens.ensure_finite()?;
        rec.push(ens, s, k % cfg.record_every == 0 || k == steps);
    }
    ens.log_norm = rec.log_norm;
    Ok(rec.finish(scheme, *cfg, events))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_reproducible() {
        let eta = GaussianState::new(Vector::from_vec(vec![1.0, -1.0]), Mat::identity(2, 2) * 0.5).unwrap();
        let a = ParticleEnsemble::sample(&eta, 1000, 7).unwrap();
        let b = ParticleEnsemble::sample(&eta, 1000, 7).unwrap();
        assert_eq!(a.positions, b.positions);
        let c = ParticleEnsemble::sample(&eta, 1000, 8).unwrap();
        assert_ne!(a.positions, c.positions);
        assert!((a.mean() - &eta.mean).norm() < 0.15);
        assert!((a.cov() - &eta.cov).norm() < 0.15);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let eta = GaussianState::scalar(0.0, 1.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| ParticleEnsemble::sample(&eta, 257, 3).unwrap());
        let many = ParticleEnsemble::sample(&eta, 257, 3).unwrap();
        assert_eq!(single.positions, many.positions);
    }

    #[test]
    fn csv_layout() {
        let row = TrajectoryRow {
            t: 0.5,
            mean: Vector::from_vec(vec![1.0, 2.0]),
            cov: Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 3.0]),
            lambda0_estimate: 0.25,
            jump_count: 4,
        };
        let tr = Trajectory {
            scheme: "x".into(),
            config: RunConfig::new(2, 1.0, 0.5, 0),
            rows: vec![row],
            log_norm: 0.0,
            regularization_events: 0,
        };
        assert_eq!(
            tr.to_csv(),
            "t,mean_0,mean_1,cov_00,cov_01,cov_11,lambda0_estimate,jump_count\n0.5,1.0,2.0,1.0,0.1,3.0,0.25,4\n"
        );
    }
}
