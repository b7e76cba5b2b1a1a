use fkqho::flow::{gaussian_kl, gaussian_w2, moments_at, propagate, tv_distance_1d};
use fkqho::ground_state::{boltzmann_gibbs, ground_state};
use fkqho::linalg::{inverse, lambda_min, random_normal_matrix, random_psd, spectral_norm, sqrt_psd, symmetrize};
use fkqho::particles::{enkf_run, EnkfVariant, ParticleEnsemble, RunConfig};
use fkqho::riccati::{ricc, solve_care};
use fkqho::spectral::{build_basis, eigenfunction_h, eigenvalue, generator_h_fd, MultiIndex};
use fkqho::{GaussianState, ModelParams, Vector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64, r: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_normal_matrix(&mut rng, r, r) * 0.7;
    let b = random_normal_matrix(&mut rng, r, r);
    let s = random_psd(&mut rng, r, 0.5, 0.2);
    ModelParams::new(a, b, s).unwrap()
}

fn reversible_model(seed: u64, r: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rr = random_psd(&mut rng, r, 0.5, 0.3);
    let k = symmetrize(&random_normal_matrix(&mut rng, r, r));
    let a = &k * inverse(&rr, "R").unwrap();
    let s = random_psd(&mut rng, r, 0.5, 0.2);
    ModelParams::from_ars(a, rr, s).unwrap()
}

fn random_state(seed: u64, r: usize) -> GaussianState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let m = fkqho::linalg::random_normal_vector(&mut rng, r);
    GaussianState::new(m, random_psd(&mut rng, r, 0.5, 0.1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn care_residual_and_trace_identity(seed in any::<u64>(), r in 1usize..5) {
        let p = random_model(seed, r);
        let sol = solve_care(&p).unwrap();
        prop_assert!(ricc(&p, &sol.p_inf).norm() <= 1e-9 * sol.p_inf.norm());
        let tr_sp = (&p.s * &sol.p_inf).trace();
        let tr_rq = (&p.r * &sol.q_inf).trace();
        prop_assert!((tr_sp - tr_rq).abs() <= 1e-8 * (1.0 + tr_sp.abs()));
        prop_assert!(lambda_min(&sol.p_inf) > 0.0);
    }

    #[test]
    fn dual_model_swaps_fixed_points(seed in any::<u64>(), r in 1usize..5) {
        let p = random_model(seed, r);
        let sol = solve_care(&p).unwrap();
        let dual = solve_care(&p.dual().unwrap()).unwrap();
        let scale = 1.0 + sol.q_inf.norm();
        prop_assert!((&dual.p_inf - &sol.q_inf).norm() <= 1e-8 * scale);
    }

    #[test]
    fn psd_square_root_squares_back(seed in any::<u64>(), r in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_psd(&mut rng, r, 1.0, 0.0);
        let root = sqrt_psd(&m).unwrap();
        prop_assert!((&root * &root - &m).norm() <= 1e-10 * (1.0 + m.norm()));
        prop_assert!((&root - root.transpose()).norm() <= 1e-12 * (1.0 + root.norm()));
    }

    #[test]
    fn norm_chain(seed in any::<u64>(), r in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_normal_matrix(&mut rng, r, r);
        let two = spectral_norm(&m);
        let fro = m.norm();
        prop_assert!(two <= fro * (1.0 + 1e-12));
        prop_assert!(fro <= (r as f64).sqrt() * two * (1.0 + 1e-12));
    }

    #[test]
    fn riccati_flow_is_a_semigroup(seed in any::<u64>(), r in 1usize..5, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let p = random_model(seed, r);
        let sol = solve_care(&p).unwrap();
        let p0 = random_state(seed, r).cov;
        let direct = sol.flow_at(&sol.at(s + t).unwrap(), &p0).unwrap();
        let composed = sol.flow_at(&sol.at(t).unwrap(), &sol.flow_at(&sol.at(s).unwrap(), &p0).unwrap()).unwrap();
        prop_assert!((&direct - &composed).norm() <= 1e-8 * (1.0 + direct.norm()));
        prop_assert!(lambda_min(&direct) >= -1e-10);
    }

    #[test]
    fn boltzmann_gibbs_round_trip(seed in any::<u64>(), r in 1usize..5) {
        let p = random_model(seed, r);
        let gs = ground_state(&solve_care(&p).unwrap()).unwrap();
        let eta = random_state(seed, r);
        let there = boltzmann_gibbs(&gs.q_inf, &eta, 1).unwrap();
        let back = boltzmann_gibbs(&gs.q_inf, &there, -1).unwrap();
        prop_assert!(back.gap(&eta) <= 1e-9 * (1.0 + eta.cov.norm() + eta.mean.norm()));
    }

    #[test]
    fn survival_mass_is_at_most_one(seed in any::<u64>(), r in 1usize..4, t in 0.0f64..4.0) {
        let p = random_model(seed, r);
        let sol = solve_care(&p).unwrap();
        let fs = propagate(&sol, &random_state(seed, r), t).unwrap();
        prop_assert!(fs.log_mass <= 1e-14);
        prop_assert!((fs.log_mass - fs.log_mass_closed).abs() <= 1e-8);
    }

    #[test]
    fn divergences_are_consistent(m1 in -2.0f64..2.0, v1 in 0.2f64..3.0, m2 in -2.0f64..2.0, v2 in 0.2f64..3.0) {
        let a = GaussianState::scalar(m1, v1).unwrap();
        let b = GaussianState::scalar(m2, v2).unwrap();
        let kl = gaussian_kl(&a, &b).unwrap();
        prop_assert!(kl >= -1e-15);
        prop_assert!(gaussian_kl(&a, &a).unwrap().abs() <= 1e-14);
        let w_ab = gaussian_w2(&a, &b).unwrap();
        let w_ba = gaussian_w2(&b, &a).unwrap();
        prop_assert!((w_ab - w_ba).abs() <= 1e-10);
        let exact = ((m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2)).sqrt();
        prop_assert!((w_ab - exact).abs() <= 1e-8);
        prop_assert!(tv_distance_1d(&a, &b).unwrap() <= (kl / 2.0).sqrt() + 1e-9);
    }

    #[test]
    fn eigenfunctions_solve_the_generator(seed in any::<u64>(), r in 1usize..3, k in 0usize..4) {
        let p = reversible_model(seed, r);
        let gs = ground_state(&solve_care(&p).unwrap()).unwrap();
        let basis = build_basis(&gs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = fkqho::linalg::random_normal_vector(&mut rng, r) * 0.5;
        let mut idx = vec![0; r];
        idx[0] = k;
        idx[r - 1] += k % 2;
        let n = MultiIndex(idx);
        let f = |y: &Vector| eigenfunction_h(&basis, &n, y);
        let lhs = generator_h_fd(&gs, &f, &x, 1e-3);
        let rhs = -eigenvalue(&basis, &n).0 * f(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-5 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn transport_ensemble_follows_riccati_from_its_sample(seed in any::<u64>(), r in 1usize..3) {
        let p = random_model(seed, r);
        let sol = solve_care(&p).unwrap();
        let eta0 = random_state(seed, r);
        let n = 40;
        let ens = ParticleEnsemble::sample(&eta0, n, seed).unwrap();
        let start = GaussianState::new(ens.mean(), ens.cov()).unwrap();
        let tr = enkf_run(&p, &eta0, &EnkfVariant::transport(r), &RunConfig::new(n, 1.0, 0.005, seed)).unwrap();
        let exact = moments_at(&sol, &start, 1.0).unwrap();
        prop_assert!(tr.last().cov.norm() > 0.0);
        prop_assert!((&tr.last().mean - &exact.mean).norm() <= 1e-6 * (1.0 + exact.mean.norm()));
        prop_assert!((&tr.last().cov - &exact.cov).norm() <= 1e-6 * (1.0 + exact.cov.norm()));
    }
}

#[test]
fn exact_h_kernel_integrates_to_one() {
    let p = reversible_model(9, 1);
    let gs = ground_state(&solve_care(&p).unwrap()).unwrap();
    let basis = build_basis(&gs).unwrap();
    let x = Vector::from_element(1, 0.7);
    let total = fkqho::quadrature::adaptive_simpson(
        &|y: f64| fkqho::spectral::kernel_truncated(&basis, &gs, 0.6, &x, &Vector::from_element(1, y), 40).unwrap(),
        -15.0,
        15.0,
        1e-12,
    );
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}
