//! Composite Simpson, adaptive Simpson and Gauss-Hermite rules.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Mat};

/// Composite Simpson rule for a matrix-valued integrand with `n` panels (rounded up to even).
pub fn matrix_quadrature<G>(g: G, a: f64, b: f64, n: usize) -> Result<Mat>
where
    G: Fn(f64) -> Mat,
{
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain("quadrature limits must be finite".into()));
    }
    let n = (n.max(2) + 1) / 2 * 2;
    let h = (b - a) / n as f64;
    let mut acc = g(a) + g(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += g(a + k as f64 * h) * w;
    }
    let out = acc * (h / 3.0);
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Domain("quadrature produced non-finite values".into()))
    }
}

/// Scalar composite Simpson rule.
pub fn simpson<G>(g: G, a: f64, b: f64, n: usize) -> f64
where
    G: Fn(f64) -> f64,
{
    let n = (n.max(2) + 1) / 2 * 2;
    let h = (b - a) / n as f64;
    let mut acc = g(a) + g(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Scalar Simpson rule with values supplied on a uniform grid of odd length.
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n % 2 == 0);
    let mut acc = values[0] + values[n];
    for (k, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<G>(g: &G, a: f64, b: f64, tol: f64) -> f64
where
    G: Fn(f64) -> f64,
{
    fn rec<G: Fn(f64) -> f64>(
        g: &G,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = g(lm);
        let frm = g(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = g(a);
    let fb = g(b);
    let fm = g(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(g, a, b, fa, fm, fb, whole, tol, 40)
}

/// Gauss-Hermite nodes and weights for the standard normal law (weights sum to one).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = Mat::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let (vals, vecs) = sym_eigen(&j);
    let nodes = vals.iter().copied().collect();
    let weights = (0..n).map(|k| vecs[(0, k)] * vecs[(0, k)]).collect();
    (nodes, weights)
}
