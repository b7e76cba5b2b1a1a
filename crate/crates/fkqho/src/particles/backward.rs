//! Reverse-time sampler for the Feynman-Kac path measure on `[0, t]`.
//!
//! Started from `Y_t ~ η_t`, the process runs backwards with drift
//! `A Y + R P_s⁻¹ (Y − X̂_s)`, where `(X̂_s, P_s)` are the normalized flow moments.

use serde::{Deserialize, Serialize};

use super::{matvec, normal, ParticleEnsemble, Recorder, RunConfig, Trajectory};
use crate::error::{Error, Result};
use crate::flow::{delta_zero_closed, moments_at};
use crate::gaussian::GaussianState;
use crate::ground_state::boltzmann_gibbs;
use crate::linalg::{inverse, lambda_min, symmetrize, Mat, Vector};
use crate::ode::integrate_ode;
use crate::riccati::RiccatiSolution;

/// Flow moments at `s` plus `R P_s⁻¹`.
fn coefficients(sol: &RiccatiSolution, eta0: &GaussianState, s: f64) -> Result<(Vector, Mat)> {
    let eta = moments_at(sol, eta0, s.max(0.0))?;
    let lmin = lambda_min(&eta.cov);
    if !(lmin >= 1e-12) {
        return Err(Error::Domain(format!("P_s is singular at s = {s} (λ_min = {lmin:e})")));
    }
    let gain = &sol.params.r * inverse(&eta.cov, "P_s")?;
    Ok((eta.mean, gain))
}

/// Backward marginals `Law(Y_s)` on a grid of `s`, from `s = t` down to `0`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BackwardMoments {
    pub t: f64,
    pub s: Vec<f64>,
    pub states: Vec<GaussianState>,
    pub error_estimate: f64,
}

fn pack(m: &Vector, c: &Mat) -> Vector {
    let r = m.len();
    let mut y = Vector::zeros(r + r * r);
    y.rows_mut(0, r).copy_from(m);
    for j in 0..r {
        for i in 0..r {
            y[r + j * r + i] = c[(i, j)];
        }
    }
    y
}

fn unpack(y: &Vector, r: usize) -> (Vector, Mat) {
    let m = y.rows(0, r).into_owned();
    let c = Mat::from_column_slice(r, r, &y.as_slice()[r..]);
    (m, c)
}

/// Integrates the moment equations of the backward process by RK4 from `s = t` to `s = 0`.
///
/// `dμ/ds = A μ + R P_s⁻¹ (μ − X̂_s)` and `dΣ/ds = G Σ + Σ G′ − R`, `G = A + R P_s⁻¹`.
pub fn backward_moments(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, steps: usize) -> Result<BackwardMoments> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    let r = sol.dim();
    let p = &sol.params;
    coefficients(sol, eta0, 0.0)?;
    let end = moments_at(sol, eta0, t)?;
    let failure = std::cell::RefCell::new(None);
    let rhs = |s: f64, y: &Vector| -> Vector {
        let (m, c) = unpack(y, r);
        match coefficients(sol, eta0, s) {
            Ok((xs, gain)) => {
                let g = &p.a + &gain;
                let dm = &p.a * &m + &gain * (&m - xs);
                let dc = &g * &c + &c * g.transpose() - &p.r;
                pack(&dm, &dc)
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Vector::from_element(y.len(), f64::NAN)
            }
        }
    };
    let path = integrate_ode(rhs, &pack(&end.mean, &end.cov), t, 0.0, steps);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let path = path?;
    let states = path
        .y
        .iter()
        .map(|y| {
            let (m, c) = unpack(y, r);
            GaussianState::new(m, symmetrize(&c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BackwardMoments { t, s: path.t, states, error_estimate: path.error_estimate })
}

/// `Law(Y_s)` as the flow at `s` reweighted by the remaining survival weight `exp(−½ x′ Δ_{t−s}(0) x)`.
pub fn backward_marginal_closed(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, s: f64) -> Result<GaussianState> {
    if !(0.0..=t).contains(&s) {
        return Err(Error::Domain(format!("need 0 ≤ s ≤ t, got s = {s}, t = {t}")));
    }
    let eta_s = moments_at(sol, eta0, s)?;
    let delta = delta_zero_closed(sol, t - s)?;
    boltzmann_gibbs(&delta, &eta_s, 1)
}

/// Mean and covariance of the Euler recursion for the backward process, to `s = 0`.
pub fn backward_euler_moments(sol: &RiccatiSolution, eta0: &GaussianState, t: f64, steps: usize) -> Result<GaussianState> {
    if steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let r = sol.dim();
    let p = &sol.params;
    let dt = t / steps as f64;
    let end = moments_at(sol, eta0, t)?;
    let (mut m, mut c) = (end.mean, end.cov);
    for k in (1..=steps).rev() {
        let s = k as f64 * dt;
        let (xs, gain) = coefficients(sol, eta0, s)?;
        let g = Mat::identity(r, r) - (&p.a + &gain) * dt;
        m = &g * m + &gain * xs * dt;
        c = &g * c * g.transpose() + &p.r * dt;
    }
    GaussianState::new(m, symmetrize(&c))
}

/// Reverse Euler-Maruyama paths `Y_{s−dt} = Y_s − (A Y + R P_s⁻¹ (Y − X̂_s)) dt + B √dt z`.
///
/// Rows are written at decreasing times `t, t − dt·record_every, …, 0`.
pub fn backward_sample(sol: &RiccatiSolution, eta0: &GaussianState, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.check(2)?;
    let t = cfg.horizon;
    let p = &sol.params;
    let r = sol.dim();
    let mut ens = ParticleEnsemble::sample(&moments_at(sol, eta0, t)?, cfg.n, cfg.seed)?;
    ens.t = t;
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let mut rec = Recorder::new(dt);
    rec.push(&ens, &p.s, true);
    for k in 1..=steps {
        let s = t - (k - 1) as f64 * dt;
        let (xs, gain) = coefficients(sol, eta0, s)?;
        let lin = &p.a + &gain;
        let offset = -(&gain * xs);
        ens.for_each_walker(|x, rng| {
            let mut drift = vec![0.0; r];
            matvec(&lin, x, &mut drift);
            let z: Vec<f64> = (0..p.noise_dim).map(|_| normal(rng) * sq).collect();
            for i in 0..r {
                let mut noise = 0.0;
                for (j, zj) in z.iter().enumerate() {
                    noise += p.b[(i, j)] * zj;
                }
                x[i] -= (drift[i] + offset[i]) * dt;
                x[i] += noise;
            }
        });
        ens.t = (t - k as f64 * dt).max(0.0);
        if !ens.positions.iter().all(|v| v.is_finite()) {
            return Err(Error::Explosion { t: ens.t });
        }
        rec.push(&ens, &p.s, k % cfg.record_every == 0 || k == steps);
    }
    Ok(rec.finish("backward", *cfg, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::riccati::solve_care;

    #[test]
    fn moments_match_reweighted_flow() {
        let a = Mat::from_row_slice(2, 2, &[-0.2, 0.8, -0.6, 0.1]);
        let b = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.4, 0.6]);
        let s = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let sol = solve_care(&ModelParams::new(a, b, s).unwrap()).unwrap();
        let eta0 = GaussianState::new(Vector::from_vec(vec![1.0, -0.5]), Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 1.1])).unwrap();
        let t = 2.0;
        let bm = backward_moments(&sol, &eta0, t, 400).unwrap();
        for (s, st) in bm.s.iter().zip(&bm.states).step_by(50) {
            let closed = backward_marginal_closed(&sol, &eta0, t, *s).unwrap();
            assert!(st.gap(&closed) < 1e-8, "s = {s}: {}", st.gap(&closed));
        }
    }

    #[test]
    fn stationary_start_is_not_time_invariant() {
        let sol = solve_care(&ModelParams::scalar(0.0, 1.0, 1.0).unwrap()).unwrap();
        let eta0 = GaussianState::scalar(0.0, 1.0).unwrap();
        let u: f64 = 1.0;
        let closed = backward_marginal_closed(&sol, &eta0, 3.0, 3.0 - u).unwrap();
        let expected = 2.0 / (1.0 + (-2.0 * u).exp()) - 1.0;
        assert!((1.0 / closed.cov[(0, 0)] - 1.0 - expected).abs() < 1e-10);
    }

    #[test]
    fn euler_recursion_is_first_order() {
        let sol = solve_care(&ModelParams::scalar(-0.5, 1.0, 2.0).unwrap()).unwrap();
        let eta0 = GaussianState::scalar(1.0, 0.5).unwrap();
        let exact = backward_marginal_closed(&sol, &eta0, 1.0, 0.0).unwrap();
        let e1 = backward_euler_moments(&sol, &eta0, 1.0, 100).unwrap().gap(&exact);
        let e2 = backward_euler_moments(&sol, &eta0, 1.0, 200).unwrap().gap(&exact);
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn dirac_start_is_rejected() {
        let sol = solve_care(&ModelParams::scalar(0.0, 1.0, 1.0).unwrap()).unwrap();
        let eta0 = GaussianState::dirac(Vector::from_vec(vec![1.0]));
        assert!(matches!(backward_moments(&sol, &eta0, 1.0, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn sampler_matches_moments() {
        let sol = solve_care(&ModelParams::scalar(-0.3, 1.0, 1.0).unwrap()).unwrap();
        let eta0 = GaussianState::scalar(1.0, 0.7).unwrap();
        let tr = backward_sample(&sol, &eta0, &RunConfig::new(20_000, 1.0, 0.005, 21)).unwrap();
        let exact = backward_marginal_closed(&sol, &eta0, 1.0, 0.0).unwrap();
        let last = tr.last();
        assert_eq!(last.t, 0.0);
        let se = (exact.cov[(0, 0)] / 20_000.0).sqrt();
        assert!((last.mean[0] - exact.mean[0]).abs() < 4.0 * se + 0.01);
        assert!((last.cov[(0, 0)] - exact.cov[(0, 0)]).abs() < 0.05);
    }
}
