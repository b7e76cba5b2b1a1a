//! Gaussian states `N(m, P)` with possibly singular covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry, inverse, lambda_min, sqrt_psd, symmetrize, Mat, Vector};

/// Mean vector and symmetric PSD covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianState {
    #[serde(with = "linalg::serde_vec")]
    pub mean: Vector,
    #[serde(with = "linalg::serde_mat")]
    pub cov: Mat,
}

impl GaussianState {
    /// Checks shapes, symmetry (`1e-12` relative) and positivity (`λmin ≥ −1e-10`), then symmetrises.
    pub fn new(mean: Vector, cov: Mat) -> Result<Self> {
        let r = mean.len();
        if cov.nrows() != r || cov.ncols() != r {
            return Err(Error::Dimension(format!(
                "covariance is {}x{} for a mean of length {r}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        linalg::ensure_finite(&cov, "covariance")?;
        if !mean.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("mean has non-finite entries".into()));
        }
        let scale = cov.norm().max(1.0);
        if asymmetry(&cov) > 1e-12 * scale {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let cov = symmetrize(&cov);
        let lmin = if r > 0 { lambda_min(&cov) } else { 0.0 };
        if lmin < -1e-10 * scale {
            return Err(Error::Domain(format!("covariance is not PSD (lambda_min = {lmin:e})")));
        }
        Ok(Self { mean, cov })
    }

    pub fn dirac(x: Vector) -> Self {
        let r = x.len();
        Self { mean: x, cov: Mat::zeros(r, r) }
    }

    pub fn centered(cov: Mat) -> Result<Self> {
        Self::new(Vector::zeros(cov.nrows()), cov)
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), Mat::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Result<Mat> {
        inverse(&self.cov, "covariance").map(|m| symmetrize(&m))
    }

    /// Log-density at `x`; requires an invertible covariance.
    pub fn log_density(&self, x: &Vector) -> Result<f64> {
        let r = self.dim() as f64;
        let prec = self.precision()?;
        let d = x - &self.mean;
        let det = self.cov.determinant();
        Ok(-0.5 * d.dot(&(&prec * &d)) - 0.5 * (r * (2.0 * std::f64::consts::PI).ln() + det.ln()))
    }

    pub fn density(&self, x: &Vector) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// `E[exp(−½ X′ Q X)]` in closed form, for symmetric `Q` with `I + P Q` invertible
    /// and `P^{1/2} Q P^{1/2} ≻ −I`.
    pub fn quadratic_exp_moment(&self, q: &Mat) -> Result<f64> {
        Ok(self.log_quadratic_exp_moment(q)?.exp())
    }

    pub fn log_quadratic_exp_moment(&self, q: &Mat) -> Result<f64> {
        let r = self.dim();
        let root = sqrt_psd(&self.cov)?;
        let inner = symmetrize(&(Mat::identity(r, r) + &root * q * &root));
        if lambda_min(&inner) <= 0.0 {
            return Err(Error::Domain("quadratic exponential moment is infinite".into()));
        }
        let ipq = Mat::identity(r, r) + &self.cov * q;
        let solved = ipq
            .clone()
            .lu()
            .solve(&self.mean)
            .ok_or_else(|| Error::Domain("I + PQ is singular".into()))?;
        let quad = self.mean.dot(&(q * solved));
        Ok(-0.5 * inner.determinant().ln() - 0.5 * quad)
    }

    /// Symmetric square root of the covariance, used to draw `m + P^{1/2} z`.
    pub fn affine_root(&self) -> Result<Mat> {
        sqrt_psd(&self.cov)
    }

    /// Max-abs gap between means and covariances.
    pub fn gap(&self, other: &Self) -> f64 {
        let dm = (&self.mean - &other.mean).amax();
        let dp = (&self.cov - &other.cov).amax();
        dm.max(dp)
    }
}
