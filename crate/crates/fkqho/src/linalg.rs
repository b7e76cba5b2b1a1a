//! Dense matrix numerics shared by every module.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute floor added to every relative tolerance.
pub const ABS_FLOOR: f64 = 1e-12;

/// Singular values below `n * sigma_max * RANK_RTOL` count as zero.
pub const RANK_RTOL: f64 = 1e-12;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm of the antisymmetric part.
pub fn asymmetry(m: &Mat) -> f64 {
    ((m - m.transpose()) * 0.5).norm()
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} has non-finite entries")))
    }
}

pub fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    let eig = symmetrize(m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn lambda_min(m: &Mat) -> f64 {
    sym_eigen(m).0[0]
}

pub fn lambda_max(m: &Mat) -> f64 {
    let v = sym_eigen(m).0;
    v[v.len() - 1]
}

fn psd_tol(m: &Mat) -> f64 {
    1e-10 * m.norm().max(1.0)
}

/// Spectral function `f` applied to a symmetric matrix.
fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = sym_eigen(m);
    let d = Mat::from_diagonal(&vals.map(f));
    symmetrize(&(&vecs * d * vecs.transpose()))
}

/// Principal symmetric square root of a PSD matrix.
pub fn sqrt_psd(m: &Mat) -> Result<Mat> {
    ensure_square(m, "sqrt_psd input")?;
    ensure_finite(m, "sqrt_psd input")?;
    let lmin = lambda_min(m);
    if lmin < -psd_tol(m) {
        return Err(Error::Domain(format!(
            "matrix is not positive semidefinite (lambda_min = {lmin:e})"
        )));
    }
    Ok(sym_apply(m, |x| x.max(0.0).sqrt()))
}

/// Inverse symmetric square root of a positive definite matrix.
pub fn inv_sqrt_pd(m: &Mat) -> Result<Mat> {
    let lmin = lambda_min(m);
    if lmin <= 0.0 {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (lambda_min = {lmin:e})"
        )));
    }
    Ok(sym_apply(m, |x| 1.0 / x.sqrt()))
}

pub fn is_psd(m: &Mat) -> bool {
    asymmetry(m) <= 1e-12_f64.max(1e-12 * m.norm()) && lambda_min(m) >= -psd_tol(m)
}

/// Iteration budget per dimension for the Schur QR sweeps.
const SCHUR_SWEEPS: usize = 200;

/// Fixed orthogonal matrix used to restart a stalled Schur iteration.
fn scramble(n: usize, k: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    random_normal_matrix(&mut rng, n, n).qr().q()
}

/// Runs `attempt` on `m`, then on a few orthogonal similarities of `m` until it converges.
/// The returned orthogonal `Z` satisfies `Z′ m Z` = the matrix that converged.
fn with_restarts<T>(m: &Mat, attempt: impl Fn(Mat) -> Option<T>) -> Result<(Mat, T)> {
    let n = m.nrows();
    if let Some(out) = attempt(m.clone()) {
        return Ok((Mat::identity(n, n), out));
    }
    for k in 1..=8 {
        let z = scramble(n, k);
        if let Some(out) = attempt(z.transpose() * m * &z) {
            return Ok((z, out));
        }
    }
    Err(Error::Solver(format!("Schur iteration did not converge on a {n}x{n} matrix")))
}

/// Eigenvalues through a bounded real Schur iteration.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    ensure_square(m, "eigenvalue input")?;
    ensure_finite(m, "eigenvalue input")?;
    let budget = SCHUR_SWEEPS * m.nrows().max(1);
    let (_, schur) = with_restarts(m, |x| Schur::try_new(x, f64::EPSILON, budget))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Complex Schur factorisation `m = Q T Q*`.
fn complex_schur(m: &Mat) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let budget = SCHUR_SWEEPS * m.nrows().max(1);
    let (z, schur) = with_restarts(m, |x| {
        Schur::try_new(x.map(|v| Complex64::new(v, 0.0)), f64::EPSILON, budget)
    })?;
    let (q, t) = schur.unpack();
    Ok((z.map(|v| Complex64::new(v, 0.0)) * q, t))
}

/// Square root whose spectrum lies in the open right half-plane.
///
/// Complex Schur form followed by the triangular square-root recurrence.
pub fn sqrt_positive_spectrum(m: &Mat) -> Result<Mat> {
    ensure_square(m, "sqrt_positive_spectrum input")?;
    ensure_finite(m, "sqrt_positive_spectrum input")?;
    let n = m.nrows();
    let scale = m.norm().max(1.0);
    for ev in eigenvalues(m)? {
        if ev.re <= 1e-12 * scale {
            return Err(Error::Domain(format!(
                "eigenvalue {} {:+}i has nonpositive real part",
                ev.re, ev.im
            )));
        }
    }
    let (q, t) = complex_schur(m)?;
    let mut u = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        u[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = s / (u[(i, i)] + u[(j, j)]);
        }
    }
    let root = &q * u * q.adjoint();
    let out = root.map(|z| z.re);
    let res = (&out * &out - m).norm() / scale;
    if !(res <= 1e-9) {
        return Err(Error::Solver(format!(
            "square root residual {res:e} exceeds 1e-9"
        )));
    }
    Ok(out)
}

/// Matrix exponential `e^{tM}`.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    ensure_square(m, "expm input")?;
    ensure_finite(m, "expm input")?;
    if !t.is_finite() {
        return Err(Error::Domain("expm time is not finite".into()));
    }
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    Ok((m * t).exp())
}

/// Numerical rank with the threshold `max(rows, cols) * sigma_max * RANK_RTOL`.
pub fn rank(m: &Mat) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * smax * RANK_RTOL;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Inverse through LU with partial pivoting, rejecting condition numbers above `1e14`.
pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    ensure_square(m, what)?;
    let c = cond(m);
    if !(c <= 1e14) {
        return Err(Error::Domain(format!(
            "{what} is numerically singular (condition number {c:e})"
        )));
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Domain(format!("{what} is singular")))
}

/// 2-norm condition number.
pub fn cond(m: &Mat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Solves `A X + X B = C` by Kronecker vectorisation.
pub fn solve_sylvester(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let m = b.nrows();
    if a.ncols() != n || b.ncols() != m || c.nrows() != n || c.ncols() != m {
        return Err(Error::Dimension("sylvester operands".into()));
    }
    let nm = n * m;
    let mut k = Mat::zeros(nm, nm);
    // column-major vec: vec(AX) = (I ⊗ A) vec X, vec(XB) = (Bᵀ ⊗ I) vec X
    for j in 0..m {
        for i in 0..n {
            let row = j * n + i;
            for l in 0..n {
                k[(row, j * n + l)] += a[(i, l)];
            }
            for l in 0..m {
                k[(row, l * n + i)] += b[(l, j)];
            }
        }
    }
    let rhs = Vector::from_column_slice(c.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("sylvester operator is singular".into()))?;
    let x = Mat::from_column_slice(n, m, sol.as_slice());
    ensure_finite(&x, "sylvester solution")?;
    Ok(x)
}

/// Solves `A X + X A′ + Q = 0`, symmetrised.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let x = solve_sylvester(a, &a.transpose(), &(-q))?;
    Ok(symmetrize(&x))
}

/// Summary norms of a square matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixDiagnostics {
    pub spectral_norm: f64,
    pub frobenius_norm: f64,
    pub log_norm: f64,
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
}

pub fn log_norm(m: &Mat) -> f64 {
    lambda_max(&symmetrize(m))
}

/// Largest real part of the spectrum; NaN when the eigenvalue iteration fails.
pub fn spectral_abscissa(m: &Mat) -> f64 {
    match eigenvalues(m) {
        Ok(ev) => ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
        Err(_) => f64::NAN,
    }
}

pub fn diagnostics(m: &Mat) -> MatrixDiagnostics {
    let sa = spectral_abscissa(m);
    MatrixDiagnostics {
        spectral_norm: spectral_norm(m),
        frobenius_norm: m.norm(),
        log_norm: log_norm(m),
        spectral_abscissa: sa,
        hurwitz: sa < 0.0,
    }
}

pub fn trace(m: &Mat) -> f64 {
    m.trace()
}

/// Row-major nested vectors, the wire format of every matrix.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serde adapter writing matrices as row-major nested arrays.
pub mod serde_mat {
    use super::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows, "matrix").map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing vectors as plain arrays.
pub mod serde_vec {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Random `G G′` with standard normal `G`, shifted by `floor·I`.
pub fn random_psd<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, scale: f64, floor: f64) -> Mat {
    let g = random_normal_matrix(rng, n, n);
    (&g * g.transpose()) * scale + Mat::identity(n, n) * floor
}

pub fn random_normal_matrix<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Mat {
    use rand_distr::{Distribution, StandardNormal};
    Mat::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

pub fn random_normal_vector<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    use rand_distr::{Distribution, StandardNormal};
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension(format!("{what} has ragged rows")));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    // Hamiltonian on which the unrestarted Schur iteration stalls.
    fn stalling_hamiltonian() -> Mat {
        Mat::from_row_slice(
            6,
            6,
            &[
                0.91052917198589944, 0.71220883793470469, -0.68676035897060128, -1.32188347365311465,
                -0.26295383016280649, -0.25453331771965626, 0.61504944715241827, 2.34046142839872084,
                0.86116631511106456, -0.26295383016280649, -0.20287180404590538, 0.27598193551607209,
                -0.69880014082447561, 0.64803260606387492, -0.06554003226603028, -0.25453331771965626,
                0.27598193551607209, -3.48683761573853124, -1.24543050894270269, -0.78052859355527615,
                0.72765982925368333, -0.91052917198589944, -0.61504944715241827, 0.69880014082447561,
                -0.78052859355527615, -1.11323501272122893, 0.01788126863473932, -0.71220883793470469,
                -2.34046142839872084, -0.64803260606387492, 0.72765982925368333, 0.01788126863473932,
                -1.76468056413935681, 0.68676035897060128, -0.86116631511106456, 0.06554003226603028,
            ],
        )
    }

    #[test]
    fn eigenvalues_survive_a_stalled_schur_iteration() {
        let h = stalling_hamiltonian();
        let ev = eigenvalues(&h).unwrap();
        assert_eq!(ev.len(), 6);
        let sum: f64 = ev.iter().map(|z| z.re).sum();
        assert!((sum - h.trace()).abs() < 1e-10);
        let det: Complex64 = ev.iter().product();
        assert!((det.re - h.determinant()).abs() < 1e-9 * (1.0 + h.determinant().abs()));
        assert_eq!(ev.iter().filter(|z| z.re < 0.0).count(), 3);
    }

    #[test]
    fn sqrt_psd_examples() {
        let i = Mat::identity(3, 3);
        assert!(close(&sqrt_psd(&i).unwrap(), &i, 1e-14));
        let d = Mat::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let s = sqrt_psd(&d).unwrap();
        assert!(close(&s, &Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])), 1e-13));
        let g = Mat::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -0.3, 0.7, 1.1, 0.2, -1.0, 0.4]);
        let m = &g * g.transpose();
        let s = sqrt_psd(&m).unwrap();
        assert!(close(&(&s * &s), &m, 1e-10));
    }

    #[test]
    fn sqrt_psd_rejects_indefinite() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(sqrt_psd(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn positive_spectrum_root_examples() {
        let i = Mat::identity(2, 2);
        assert!(close(&sqrt_positive_spectrum(&i).unwrap(), &i, 1e-13));
        let four = Mat::from_element(1, 1, 4.0);
        assert!((sqrt_positive_spectrum(&four).unwrap()[(0, 0)] - 2.0).abs() < 1e-13);
        // A = diag(1,-1), R = I, S = diag(3,8): A² + RS = diag(4,9)
        let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        let s = Mat::from_diagonal(&Vector::from_vec(vec![3.0, 8.0]));
        let m = &a * &a + &s;
        let root = sqrt_positive_spectrum(&m).unwrap();
        assert!(close(&root, &Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])), 1e-12));
    }

    #[test]
    fn positive_spectrum_root_non_normal() {
        let m = Mat::from_row_slice(3, 3, &[2.0, 5.0, -1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 4.0]);
        let root = sqrt_positive_spectrum(&m).unwrap();
        assert!(close(&(&root * &root), &m, 1e-10));
        assert!(root.complex_eigenvalues().iter().all(|z| z.re > 0.0));
        let rot = Mat::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0]);
        let root = sqrt_positive_spectrum(&rot).unwrap();
        assert!(close(&(&root * &root), &rot, 1e-12));
    }

    #[test]
    fn positive_spectrum_root_rejects_left_half_plane() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -2.0]));
        assert!(matches!(sqrt_positive_spectrum(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn expm_examples() {
        let z = Mat::zeros(3, 3);
        assert!(close(&expm(&z, 2.5).unwrap(), &Mat::identity(3, 3), 0.0));
        let m = Mat::from_element(1, 1, -1.0);
        assert!((expm(&m, 1.0).unwrap()[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = expm(&m, 0.7).unwrap();
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        assert!(close(&e, &Mat::from_row_slice(2, 2, &[c, s, -s, c]), 1e-14));
        assert!(expm(&Mat::from_element(1, 1, f64::NAN), 1.0).is_err());
    }

    #[test]
    fn expm_semigroup() {
        let m = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.3, 0.1, -0.5, 1.0, -0.7, 0.2, 0.4]);
        let lhs = expm(&m, 1.7).unwrap();
        let rhs = expm(&m, 0.6).unwrap() * expm(&m, 1.1).unwrap();
        assert!((&lhs - &rhs).norm() <= 1e-10 * lhs.norm());
    }

    #[test]
    fn rank_examples() {
        let b = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(rank(&b), 1);
        assert_eq!(rank(&Mat::zeros(2, 3)), 0);
        assert_eq!(rank(&Mat::identity(4, 4)), 4);
    }

    #[test]
    fn sylvester_and_lyapunov() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let b = Mat::from_row_slice(3, 3, &[-0.3, 0.0, 1.0, 0.2, -1.0, 0.0, 0.0, 0.1, -0.5]);
        let c = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        assert!(close(&(&a * &x + &x * &b), &c, 1e-12));
        let q = Mat::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert!(close(&(&a * &p + &p * a.transpose() + &q), &Mat::zeros(2, 2), 1e-12));
    }

    #[test]
    fn diagnostics_examples() {
        let m = Mat::from_row_slice(2, 2, &[-1.0, 10.0, 0.0, -2.0]);
        let d = diagnostics(&m);
        assert!(d.hurwitz);
        assert!((d.spectral_abscissa + 1.0).abs() < 1e-12);
        assert!(d.log_norm > 0.0);
        assert!(d.spectral_norm >= d.log_norm && d.log_norm >= d.spectral_abscissa);
    }
}
