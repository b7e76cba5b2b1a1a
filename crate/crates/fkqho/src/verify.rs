//! Self-check suite run against a single model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{conjugation_check, entropy_decay_report, kt_function, moments_at, propagate, survival_probability};
use crate::gaussian::GaussianState;
use crate::ground_state::{boltzmann_gibbs, eigen_residual, ground_state, h_process_moments};
use crate::linalg::{random_normal_vector, random_psd, spectral_abscissa, Mat, Vector};
use crate::model::{is_reversible, validate, Check, ValidationReport};
use crate::ode::integrate_ode;
use crate::particles::{
    backward_marginal_closed, backward_moments, dmc_run, enkf_run, fpf_poisson_residual, hproc_run, EnkfVariant,
    HprocScheme, RunConfig,
};
use crate::riccati::{reversible_fixed_points, ricc, RiccatiSolution};
use crate::spectral::{build_basis, default_max_order, exact_h_kernel, kernel_truncated, orthonormality_defect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Deterministic checks only.
    Fast,
    /// Adds short particle runs.
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(Error::Parse(format!("unknown level {other:?}, expected fast or full"))),
        }
    }
}

fn pack_mat(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

fn unpack_mat(v: &Vector, r: usize) -> Mat {
    Mat::from_column_slice(r, r, v.as_slice())
}

/// Runs every applicable check; `seed` drives random test points and particle runs.
pub fn verify_model(sol: &RiccatiSolution, level: Level, seed: u64) -> Result<ValidationReport> {
    let p = &sol.params;
    let r = p.dim;
    let mut checks = validate(p).checks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    checks.push(Check::upper("CARE relative residual", ricc(p, &sol.p_inf).norm() / sol.p_inf.norm(), 1e-9));
    checks.push(Check::upper("A - P S spectral abscissa", spectral_abscissa(&sol.drift_filter), -1e-12));
    let tr_sp = (&p.s * &sol.p_inf).trace();
    let scale = 1.0 + tr_sp.abs();
    checks.push(Check::upper("Tr(SP) = Tr(RQ)", (tr_sp - (&p.r * &sol.q_inf).trace()).abs() / scale, 1e-8));
    let tr_minus = 2.0 * p.a.trace() - (&p.s * &sol.p_inf_minus).trace();
    checks.push(Check::upper("Tr(SP) = 2Tr(A) - Tr(SP-)", (tr_sp - tr_minus).abs() / scale, 1e-8));

    let gs = ground_state(sol)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = random_normal_vector(&mut rng, r) * 2.0;
        worst = worst.max(eigen_residual(&gs, &x).abs() / (1.0 + x.norm_squared()));
    }
    checks.push(Check::upper("ground state eigen-residual", worst, 1e-8));

    let p0 = random_psd(&mut rng, r, 1.0, 0.1);
    let rhs = |_: f64, y: &Vector| pack_mat(&ricc(p, &unpack_mat(y, r)));
    let path = integrate_ode(rhs, &pack_mat(&p0), 0.0, 10.0, 4000)?;
    let mut flow_gap: f64 = 0.0;
    for (t, y) in path.t.iter().zip(&path.y).step_by(100) {
        let at = sol.at(*t)?;
        flow_gap = flow_gap.max((sol.flow_at(&at, &p0)? - unpack_mat(y, r)).norm());
    }
    checks.push(Check::upper("Riccati flow vs RK4", flow_gap, 1e-6));
    let (s, t) = (0.7, 1.3);
    let direct = sol.flow_at(&sol.at(s + t)?, &p0)?;
    let composed = sol.flow_at(&sol.at(t)?, &sol.flow_at(&sol.at(s)?, &p0)?)?;
    checks.push(Check::upper("Riccati semigroup property", (direct - composed).norm(), 1e-8));

    let mut rate_gap: f64 = 0.0;
    for t in [0.5, 1.0, 2.0, 5.0] {
        rate_gap = rate_gap.max((survival_probability(sol, &gs.eta_inf, t)?.rate - gs.lambda0).abs());
    }
    checks.push(Check::upper("stationary survival rate", rate_gap, 1e-10));

    let xs: Vec<Vector> = (0..5).map(|_| random_normal_vector(&mut rng, r)).collect();
    let kt_gap = kt_function(sol, &gs, 1.0, &xs)?.iter().map(|k| k.relative_gap).fold(0.0, f64::max);
    checks.push(Check::upper("k_t routes agree", kt_gap, 1e-8));

    let eta0 = GaussianState::new(random_normal_vector(&mut rng, r), random_psd(&mut rng, r, 1.0, 0.2))?;
    let fs = propagate(sol, &eta0, 2.0)?;
    checks.push(Check::upper("flow cross-check", fs.cross_check_gap, 1e-8));
    let (mg, lg) = conjugation_check(sol, &gs, &eta0, 2.0)?;
    checks.push(Check::upper("h-transform conjugation (moments)", mg, 1e-8));
    checks.push(Check::upper("h-transform conjugation (mass)", lg, 1e-8));

    let eta_t = moments_at(sol, &eta0, 1.0)?;
    let mut poisson: f64 = 0.0;
    for x in &xs {
        poisson = poisson.max(fpf_poisson_residual(p, &eta_t, x, 1e-4)?.abs());
    }
    checks.push(Check::upper("particle-flow Poisson residual", poisson, 1e-6));

    let bm = backward_moments(sol, &eta0, 2.0, 400)?;
    let mut bgap: f64 = 0.0;
    for (s, st) in bm.s.iter().zip(&bm.states).step_by(40) {
        bgap = bgap.max(st.gap(&backward_marginal_closed(sol, &eta0, 2.0, *s)?));
    }
    checks.push(Check::upper("backward moments vs reweighted flow", bgap, 1e-6));

    if is_reversible(p) {
        if (&p.r - Mat::identity(r, r)).norm() < 1e-12 {
            let eta0_h = boltzmann_gibbs(&gs.q_inf, &eta0, 1)?;
            let rep = entropy_decay_report(&gs, &eta0_h, 3.0, 30)?;
            checks.push(Check::upper("de Bruijn residual", rep.max_de_bruijn_residual, 1e-4));
            checks.push(Check::lower("entropy and Fisher bounds", if rep.bounds_hold { 1.0 } else { 0.0 }, 1.0));
        }
        let closed = reversible_fixed_points(p)?;
        let gap = [
            (&closed.p_inf - &sol.p_inf).norm(),
            (&closed.q_inf - &sol.q_inf).norm(),
            (&closed.p_inf_minus - &sol.p_inf_minus).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        checks.push(Check::upper("reversible closed forms", gap, 1e-8));
        let basis = build_basis(&gs)?;
        let m = default_max_order(r);
        let t = 1.0;
        let mut kgap: f64 = 0.0;
        for x in &xs {
            for y in &xs {
                let exact = exact_h_kernel(&gs, t, x, y)?;
                let series = kernel_truncated(&basis, &gs, t, x, y, 4 * m)?;
                kgap = kgap.max((series - exact).abs() / exact.abs().max(1.0));
            }
        }
        checks.push(Check::upper("spectral kernel vs closed kernel", kgap, 1e-6));
        if r <= 3 {
            checks.push(Check::upper("eigenfunction orthonormality", orthonormality_defect(&basis, &gs, m.min(6))?, 1e-8));
        }
    }

    if level == Level::Full {
        let n = 2000;
        let dmc = dmc_run(p, &eta0, &RunConfig::new(n, 10.0, 0.01, seed))?;
        let est = dmc.last().lambda0_estimate;
        checks.push(Check::upper("DMC zero-point energy", (est - gs.lambda0).abs() / gs.lambda0.max(1.0), 0.05));
        let horizon = 2.0;
        let exact = moments_at(sol, &eta0, horizon)?;
        let mean_env = 4.0 * (exact.cov.norm() * r as f64 / n as f64).sqrt();
        let cov_env = 4.0 * ((exact.cov.trace().powi(2) + exact.cov.norm_squared()) / n as f64).sqrt();
        for v in [EnkfVariant::Vanilla, EnkfVariant::Deterministic, EnkfVariant::transport(r)] {
            let tr = enkf_run(p, &eta0, &v, &RunConfig::new(n, horizon, 0.005, seed))?;
            let last = tr.last();
            checks.push(Check::upper(format!("{} mean", v.name()), (&last.mean - &exact.mean).norm() / mean_env, 1.0));
            checks.push(Check::upper(format!("{} covariance", v.name()), (&last.cov - &exact.cov).norm() / cov_env, 1.0));
        }
        let h0 = boltzmann_gibbs(&gs.q_inf, &eta0, 1)?;
        let tr = hproc_run(&gs, &h0, HprocScheme::Exact, &RunConfig::new(n, horizon, 0.05, seed))?;
        let hm = h_process_moments(&gs, &h0, horizon)?;
        let h_env = 4.0 * (hm.cov.norm() * r as f64 / n as f64).sqrt();
        checks.push(Check::upper("h-process mean", (&tr.last().mean - &hm.mean).norm() / h_env, 1.0));
        let again = dmc_run(p, &eta0, &RunConfig::new(n, 1.0, 0.01, seed))?;
        let twice = dmc_run(p, &eta0, &RunConfig::new(n, 1.0, 0.01, seed))?;
        checks.push(Check::lower("seeded runs identical", if again.to_csv() == twice.to_csv() { 1.0 } else { 0.0 }, 1.0));
    }

    Ok(ValidationReport { checks })
}
