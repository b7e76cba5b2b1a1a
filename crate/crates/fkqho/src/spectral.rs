//! Hermite spectral decomposition of reversible models.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::ground_state::{ground_state, h_process_moments, GroundState};
use crate::linalg::{eigenvalues, inv_sqrt_pd, inverse, sqrt_positive_spectrum, sqrt_psd, sym_eigen, symmetrize, Mat, Vector};
use crate::model::{is_reversible, ModelParams};
use crate::riccati::solve_care;

/// Multi-index `n = (n₁, …, n_r)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zero(r: usize) -> Self {
        Self(vec![0; r])
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// `n! = Π nᵢ!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| (1..=k).map(|j| j as f64).product::<f64>()).product()
    }

    /// All multi-indices with `|n| ≤ max_order`, by increasing order then lexicographically.
    pub fn enumerate(r: usize, max_order: usize) -> Vec<MultiIndex> {
        fn fill(r: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if prefix.len() == r - 1 {
                prefix.push(left);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for k in (0..=left).rev() {
                prefix.push(k);
                fill(r, left - k, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        for order in 0..=max_order {
            fill(r, order, &mut Vec::with_capacity(r), &mut out);
        }
        out
    }
}

/// `C(M + r, r)`.
pub fn multi_index_count(r: usize, max_order: usize) -> usize {
    let mut c: u128 = 1;
    for k in 1..=r as u128 {
        c = c * (max_order as u128 + k) / k;
    }
    c as usize
}

/// `He_0(z), …, He_max(z)` by the three-term recurrence.
pub fn hermite_table(max: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    out.push(1.0);
    if max >= 1 {
        out.push(z);
    }
    for k in 1..max {
        let next = z * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// `ℍ_n(z) = Π He_{nᵢ}(zᵢ)`.
pub fn hermite(n: &MultiIndex, z: &Vector) -> f64 {
    n.0.iter()
        .zip(z.iter())
        .map(|(&k, &zi)| hermite_table(k, zi)[k])
        .product()
}

pub fn default_max_order(r: usize) -> usize {
    match r {
        0..=2 => 12,
        3 => 6,
        _ => 4,
    }
}

/// Eigen-structure of `Λ^h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub lambda_h: Mat,
    pub z: Mat,
    /// `λ₁^h ≤ … ≤ λ_r^h`.
    pub rates: Vec<f64>,
    pub lambda0: f64,
    pub max_order: usize,
    /// `Z′ (P^h∞)^{−1/2}`, mapping states to Hermite arguments.
    pub whitening: Mat,
    /// `(det(P∞⁻¹ + Q∞) / (2π)^r)^{1/4}`.
    pub normalizer: f64,
}

/// Builds `Λ^h = −(P^h∞)^{−1/2} (A² + RS)^{1/2} (P^h∞)^{1/2}` and its eigenvectors.
pub fn build_basis(gs: &GroundState) -> Result<SpectralBasis> {
    let p = &gs.params;
    if !is_reversible(p) {
        return Err(Error::Precondition("spectral basis needs a reversible model".into()));
    }
    let r = p.dim;
    let root = sqrt_positive_spectrum(&(&p.a * &p.a + &p.r * &p.s))?;
    let ph_sqrt = sqrt_psd(&gs.p_h_inf)?;
    let ph_isqrt = inv_sqrt_pd(&gs.p_h_inf)?;
    let raw = -(&ph_isqrt * &root * &ph_sqrt);
    let lambda_h = symmetrize(&raw);
    let (vals, z) = sym_eigen(&(-&lambda_h));
    let rates: Vec<f64> = vals.iter().copied().collect();
    if rates[0] <= 0.0 {
        return Err(Error::Inconsistency(format!("nonpositive spectral rate {}", rates[0])));
    }
    let whitening = z.transpose() * &ph_isqrt;
    let det = (inverse(&gs.p_inf, "P_inf")? + &gs.q_inf).determinant();
    let normalizer = (det / (2.0 * std::f64::consts::PI).powi(r as i32)).powf(0.25);
    Ok(SpectralBasis {
        lambda_h,
        z,
        rates,
        lambda0: gs.lambda0,
        max_order: default_max_order(r),
        whitening,
        normalizer,
    })
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    pub fn indices(&self, max_order: usize) -> Vec<MultiIndex> {
        MultiIndex::enumerate(self.dim(), max_order)
    }

    /// Per-coordinate Hermite tables at `Z′(P^h∞)^{−1/2} x`.
    fn tables(&self, x: &Vector, max: usize) -> Vec<Vec<f64>> {
        let z = &self.whitening * x;
        z.iter().map(|&zi| hermite_table(max, zi)).collect()
    }
}

/// `(λ_n^h, λ_n) = (Σ nᵢ λᵢ^h, λ₀ + λ_n^h)`.
pub fn eigenvalue(basis: &SpectralBasis, n: &MultiIndex) -> (f64, f64) {
    let lh: f64 = n.0.iter().zip(&basis.rates).map(|(&k, l)| k as f64 * l).sum();
    (lh, basis.lambda0 + lh)
}

/// `φ^h_n(x) = ℍ_n(Z′(P^h∞)^{−1/2} x) / √n!`.
pub fn eigenfunction_h(basis: &SpectralBasis, n: &MultiIndex, x: &Vector) -> f64 {
    hermite(n, &(&basis.whitening * x)) / n.factorial().sqrt()
}

/// `φ_n(x) = (det(P∞⁻¹+Q∞)/(2π)^r)^{1/4} h₀(x) φ^h_n(x)`.
pub fn eigenfunction(basis: &SpectralBasis, gs: &GroundState, n: &MultiIndex, x: &Vector) -> f64 {
    basis.normalizer * gs.log_h0(x).exp() * eigenfunction_h(basis, n, x)
}

/// `Σ_{|n|≤M} e^{−λ_n^h t} φ^h_n(x) φ^h_n(y)`, the kernel relative to `η^h∞`.
pub fn kernel_series(basis: &SpectralBasis, t: f64, x: &Vector, y: &Vector, max_order: usize) -> f64 {
    let tx = basis.tables(x, max_order);
    let ty = basis.tables(y, max_order);
    let decay: Vec<f64> = basis.rates.iter().map(|l| (-l * t).exp()).collect();
    let mut total = 0.0;
    for n in basis.indices(max_order) {
        let mut term = 1.0;
        for (i, &k) in n.0.iter().enumerate() {
            let mut f = 1.0;
            for j in 1..=k {
                f *= decay[i] / j as f64;
            }
            term *= f * tx[i][k] * ty[i][k];
        }
        total += term;
    }
    total
}

/// Truncated spectral density of `K^h_t(x, ·)` at `y`.
pub fn kernel_truncated(
    basis: &SpectralBasis,
    gs: &GroundState,
    t: f64,
    x: &Vector,
    y: &Vector,
    max_order: usize,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("kernel needs t > 0, got {t}")));
    }
    Ok(kernel_series(basis, t, x, y, max_order) * gs.eta_h_inf.density(y)?)
}

/// Gaussian transition density `N(e^{t D_h} x, Δ^h_t)` at `y`.
pub fn exact_h_kernel(gs: &GroundState, t: f64, x: &Vector, y: &Vector) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("kernel needs t > 0, got {t}")));
    }
    h_process_moments(gs, &GaussianState::dirac(x.clone()), t)?.density(y)
}

/// Errors of the two Mehler identities over a point grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MehlerReport {
    pub t: f64,
    pub max_order: usize,
    pub points: usize,
    /// Truncated Hermite series against the closed Mehler kernel.
    pub series_error: f64,
    /// The coth/sinh propagator against `e^{−λ₀t} h₀ K^h_t h₀⁻¹`.
    pub propagator_error: f64,
}

/// Model `A = 0`, `R = S⁻¹` with `B = S^{−1/2}`.
pub fn mehler_model(s: &Mat) -> Result<ModelParams> {
    let b = inv_sqrt_pd(s)?;
    ModelParams::new(Mat::zeros(s.nrows(), s.nrows()), b, s.clone())
}

/// Compares both sides of Mehler's formula and the coth/sinh Feynman-Kac kernel
/// at every pair `(x, y)` of `grid`.
pub fn mehler_check(s: &Mat, t: f64, grid: &[Vector], max_order: usize) -> Result<MehlerReport> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("mehler check needs t > 0, got {t}")));
    }
    let p = mehler_model(s)?;
    let gs = ground_state(&solve_care(&p)?)?;
    let basis = build_basis(&gs)?;
    let r = p.dim as f64;
    let rho = (-t).exp();
    let one_m = 1.0 - rho * rho;
    let det_s = s.determinant();
    let (sh, ch) = (t.sinh(), t.cosh());
    let mut series_error: f64 = 0.0;
    let mut propagator_error: f64 = 0.0;
    for x in grid {
        for y in grid {
            let series = kernel_series(&basis, t, x, y, max_order);
            let d = y - x * rho;
            let closed = one_m.powf(-0.5 * r)
                * (-d.dot(&(s * &d)) / one_m + y.dot(&(s * y))).exp();
            series_error = series_error.max((series - closed).abs());
            let xsx = x.dot(&(s * x));
            let ysy = y.dot(&(s * y));
            let fk = det_s.sqrt()
                * (2.0 * std::f64::consts::PI).powf(-0.5 * r)
                * sh.powf(-0.5 * r)
                * (-(ch / sh) / 2.0 * (xsx + ysy) + x.dot(&(s * y)) / sh).exp();
            let conj = (-gs.lambda0 * t + gs.log_h0(x) - gs.log_h0(y)).exp()
                * exact_h_kernel(&gs, t, x, y)?;
            propagator_error = propagator_error.max((fk - conj).abs());
        }
    }
    Ok(MehlerReport { t, max_order, points: grid.len(), series_error, propagator_error })
}

/// Applies `e^{−iλ_n t}` (real time) or `e^{−λ_n t}` (imaginary time) to coefficients
/// indexed like `basis.indices(max_order)`.
pub fn schrodinger_evolve(
    basis: &SpectralBasis,
    coeffs: &[Complex64],
    max_order: usize,
    t: f64,
    real_time: bool,
) -> Result<Vec<Complex64>> {
    let idx = basis.indices(max_order);
    if idx.len() != coeffs.len() {
        return Err(Error::Dimension(format!(
            "expected {} coefficients for order {max_order}, got {}",
            idx.len(),
            coeffs.len()
        )));
    }
    Ok(idx
        .iter()
        .zip(coeffs)
        .map(|(n, c)| {
            let l = eigenvalue(basis, n).1;
            let f = if real_time { Complex64::new(0.0, -l * t).exp() } else { Complex64::new((-l * t).exp(), 0.0) };
            c * f
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoincareReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub passed: bool,
}

/// `‖K^h_t f − η^h∞(f)‖² ≤ e^{−2λ₁^h t} ‖f − η^h∞(f)‖²` for `f = Σ cₙ φ^h_n`.
pub fn poincare_check(basis: &SpectralBasis, f_coeffs: &[f64], max_order: usize, times: &[f64]) -> Result<PoincareReport> {
    let idx = basis.indices(max_order);
    if idx.len() != f_coeffs.len() {
        return Err(Error::Dimension("coefficient count does not match the multi-index set".into()));
    }
    let l1 = basis.rates[0];
    let var: f64 = f_coeffs.iter().skip(1).map(|c| c * c).sum();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for &t in times {
        let l: f64 = idx
            .iter()
            .zip(f_coeffs)
            .skip(1)
            .map(|(n, c)| (-2.0 * eigenvalue(basis, n).0 * t).exp() * c * c)
            .sum();
        lhs.push(l);
        rhs.push((-2.0 * l1 * t).exp() * var);
    }
    let passed = lhs.iter().zip(&rhs).all(|(l, r)| *l <= r * (1.0 + 1e-12) + 1e-300);
    Ok(PoincareReport { times: times.to_vec(), lhs, rhs, passed })
}

/// `ℒ^h f(x) = (D_h x)·∇f + ½ Tr(R ∇²f)` by central differences with step `h`.
pub fn generator_h_fd<F: Fn(&Vector) -> f64>(gs: &GroundState, f: &F, x: &Vector, h: f64) -> f64 {
    let r = gs.dim();
    let drift = &gs.drift_h * x;
    let mut grad = Vector::zeros(r);
    let mut hess = Mat::zeros(r, r);
    let f0 = f(x);
    for i in 0..r {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let shift = |si: f64, sj: f64| {
                let mut y = x.clone();
                y[i] += si * h;
                y[j] += sj * h;
                f(&y)
            };
            let v = (shift(1.0, 1.0) - shift(1.0, -1.0) - shift(-1.0, 1.0) + shift(-1.0, -1.0)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    drift.dot(&grad) + 0.5 * (&gs.params.r * hess).trace()
}

/// Orthonormality defect `max |⟨φ^h_n, φ^h_m⟩ − δ_{nm}|` in `L₂(η^h∞)` over `|n|, |m| ≤ max_order`,
/// by tensor Gauss-Hermite quadrature with `max(20, 2M+4)` nodes per axis.
pub fn orthonormality_defect(basis: &SpectralBasis, gs: &GroundState, max_order: usize) -> Result<f64> {
    let r = basis.dim();
    if r > 3 {
        return Err(Error::Precondition("quadrature check limited to r <= 3".into()));
    }
    let nodes = (2 * max_order + 4).max(20);
    let (x1, w1) = crate::quadrature::gauss_hermite(nodes);
    let root = sqrt_psd(&gs.p_h_inf)?;
    let idx = basis.indices(max_order);
    let mut gram = Mat::zeros(idx.len(), idx.len());
    let total = nodes.pow(r as u32);
    for k in 0..total {
        let mut z = Vector::zeros(r);
        let mut w = 1.0;
        let mut rem = k;
        for i in 0..r {
            z[i] = x1[rem % nodes];
            w *= w1[rem % nodes];
            rem /= nodes;
        }
        let x = &root * z;
        let vals: Vec<f64> = idx.iter().map(|n| eigenfunction_h(basis, n, &x)).collect();
        for a in 0..idx.len() {
            for b in 0..=a {
                gram[(a, b)] += w * vals[a] * vals[b];
            }
        }
    }
    let mut defect: f64 = 0.0;
    for a in 0..idx.len() {
        for b in 0..=a {
            let target = if a == b { 1.0 } else { 0.0 };
            defect = defect.max((gram[(a, b)] - target).abs());
        }
    }
    Ok(defect)
}

/// Spectrum export entry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumEntry {
    pub n: Vec<usize>,
    pub lambda_n: f64,
    pub lambda_n_h: f64,
}

pub fn spectrum_table(basis: &SpectralBasis, max_order: usize) -> Vec<SpectrumEntry> {
    basis
        .indices(max_order)
        .into_iter()
        .map(|n| {
            let (lh, l) = eigenvalue(basis, &n);
            SpectrumEntry { n: n.0, lambda_n: l, lambda_n_h: lh }
        })
        .collect()
}

/// Checks that the eigenvalues of `A² + RS` are the squared rates and that
/// `Λ^h = −½ (P^h∞)^{−1/2} R (P^h∞)^{−1/2}`; returns both residuals.
pub fn basis_residuals(basis: &SpectralBasis, gs: &GroundState) -> Result<(f64, f64)> {
    let p = &gs.params;
    let m = &p.a * &p.a + &p.r * &p.s;
    let mut ev: Vec<f64> = eigenvalues(&m)?.iter().map(|z| z.re).collect();
    ev.sort_by(f64::total_cmp);
    let rate_gap = ev
        .iter()
        .zip(&basis.rates)
        .map(|(e, l)| (e - l * l).abs() / (1.0 + e.abs()))
        .fold(0.0, f64::max);
    let ph_isqrt = inv_sqrt_pd(&gs.p_h_inf)?;
    let alt = -(&ph_isqrt * &p.r * &ph_isqrt) * 0.5;
    let form_gap = (&alt - &basis.lambda_h).norm() / (1.0 + alt.norm());
    Ok((rate_gap, form_gap))
}
