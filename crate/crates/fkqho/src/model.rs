//! Model definition, hypothesis checks and the JSON model format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry, from_rows, lambda_min, rank, sqrt_psd, to_rows, Mat, Vector};

/// Drift `A`, noise `B`, cached `R = BB′` and potential matrix `S` of an `r`-dimensional model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub noise_dim: usize,
    pub a: Mat,
    pub b: Mat,
    pub r: Mat,
    pub s: Mat,
}

/// On-disk layout: `{"r": int, "A": [[..]], "B": [[..]], "S": [[..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub r: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
}

impl ModelParams {
    /// Builds a model from `A` (r×r), `B` (r×r1) and `S` (r×r).
    pub fn new(a: Mat, b: Mat, s: Mat) -> Result<Self> {
        let dim = a.nrows();
        if dim == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        if a.ncols() != dim {
            return Err(Error::Dimension(format!("A is {}x{}, expected square", dim, a.ncols())));
        }
        if b.nrows() != dim || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B is {}x{}, expected {}xr1 with r1 > 0",
                b.nrows(),
                b.ncols(),
                dim
            )));
        }
        if s.nrows() != dim || s.ncols() != dim {
            return Err(Error::Dimension(format!("S is {}x{}, expected {dim}x{dim}", s.nrows(), s.ncols())));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&s, "S")] {
            linalg::ensure_finite(m, name)?;
        }
        let r = &b * b.transpose();
        Ok(Self { dim, noise_dim: b.ncols(), a, b, r, s })
    }

    /// Builds a model from `(A, R, S)` with `B = R^{1/2}`.
    pub fn from_ars(a: Mat, r: Mat, s: Mat) -> Result<Self> {
        let b = sqrt_psd(&r)?;
        let mut p = Self::new(a, b, s)?;
        p.r = linalg::symmetrize(&r);
        Ok(p)
    }

    /// Scalar model `dX = A X dt + B dW`, `V(x) = ½ S x²`.
    pub fn scalar(a: f64, b: f64, s: f64) -> Result<Self> {
        Self::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, s),
        )
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let a = from_rows(&f.a, "A")?;
        let b = from_rows(&f.b, "B")?;
        let s = from_rows(&f.s, "S")?;
        if a.nrows() != f.r {
            return Err(Error::Dimension(format!("declared r = {} but A has {} rows", f.r, a.nrows())));
        }
        Self::new(a, b, s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        Self::from_file(&f)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile { r: self.dim, a: to_rows(&self.a), b: to_rows(&self.b), s: to_rows(&self.s) }
    }

    /// Dual model `(A′, S, R)` obtained by swapping the roles of noise and potential.
    pub fn dual(&self) -> Result<Self> {
        Self::from_ars(self.a.transpose(), self.s.clone(), self.r.clone())
    }
}

/// One named hypothesis check.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn upper(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold }
    }

    /// Passes when `value >= threshold`.
    pub fn lower(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value >= threshold, value, threshold }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Krylov matrix `[M, A M, …, A^{r−1} M]`.
pub fn krylov(a: &Mat, m: &Mat) -> Mat {
    let r = a.nrows();
    let k = m.ncols();
    let mut out = Mat::zeros(r, r * k);
    let mut block = m.clone();
    for i in 0..r {
        out.view_mut((0, i * k), (r, k)).copy_from(&block);
        block = a * block;
    }
    out
}

/// Checks symmetry, positivity, `R = BB′` and both controllability conditions.
pub fn validate(p: &ModelParams) -> ValidationReport {
    let mut checks = vec![
        Check::upper("S symmetric", asymmetry(&p.s), 1e-12),
        Check::upper("R symmetric", asymmetry(&p.r), 1e-12),
        Check::lower("S positive semidefinite", lambda_min(&p.s), -1e-10),
        Check::lower("R positive semidefinite", lambda_min(&p.r), -1e-10),
        Check::upper("R = BB'", (&p.r - &p.b * p.b.transpose()).norm(), 1e-12),
    ];
    let rh = sqrt_psd(&linalg::symmetrize(&p.r)).unwrap_or_else(|_| p.b.clone());
    let sh = sqrt_psd(&linalg::symmetrize(&p.s)).unwrap_or_else(|_| p.s.clone());
    let rank_r = rank(&krylov(&p.a, &rh));
    let rank_s = rank(&krylov(&p.a.transpose(), &sh));
    checks.push(Check::lower("(A, R^1/2) controllable", rank_r as f64, p.dim as f64));
    checks.push(Check::lower("(A', S^1/2) controllable", rank_s as f64, p.dim as f64));
    ValidationReport { checks }
}

/// Fails with a validation error unless every hypothesis holds.
pub fn require_valid(p: &ModelParams) -> Result<()> {
    let rep = validate(p);
    if rep.passed() {
        Ok(())
    } else {
        let names: Vec<String> = rep
            .failures()
            .iter()
            .map(|c| format!("{} (value {:e}, threshold {:e})", c.name, c.value, c.threshold))
            .collect();
        Err(Error::Validation(names.join("; ")))
    }
}

/// `V(x) = ½ x′ S x`.
pub fn potential(p: &ModelParams, x: &Vector) -> f64 {
    0.5 * x.dot(&(&p.s * x))
}

/// `R ≻ 0` and `AR = RA′` up to a relative tolerance of `1e-10`.
pub fn is_reversible(p: &ModelParams) -> bool {
    let ar = &p.a * &p.r;
    let gap = (&ar - ar.transpose()).norm() / ar.norm().max(1.0);
    gap <= 1e-10 && lambda_min(&p.r) > 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&Vector::from_vec(v.to_vec()))
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&ModelParams::scalar(0.0, 1.0, 1.0).unwrap()).passed());
        let p = ModelParams::new(Mat::identity(2, 2), Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let rep = validate(&p);
        assert!(!rep.passed());
        assert_eq!(rep.failures()[0].name, "(A, R^1/2) controllable");
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(validate(&ModelParams::new(a, b, Mat::identity(2, 2)).unwrap()).passed());
    }

    #[test]
    fn dimension_errors_are_structural() {
        let e = ModelParams::new(Mat::identity(2, 2), Mat::identity(3, 3), Mat::identity(2, 2));
        assert!(matches!(e, Err(Error::Dimension(_))));
        let e = ModelParams::new(Mat::zeros(2, 3), Mat::identity(2, 2), Mat::identity(2, 2));
        assert!(matches!(e, Err(Error::Dimension(_))));
    }

    #[test]
    fn potential_examples() {
        let p = ModelParams::new(Mat::zeros(2, 2), Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        assert_eq!(potential(&p, &Vector::from_vec(vec![1.0, 1.0])), 1.0);
        let p = ModelParams::new(Mat::zeros(2, 2), Mat::identity(2, 2), diag(&[1.0, 3.0])).unwrap();
        assert_eq!(potential(&p, &Vector::from_vec(vec![2.0, 0.0])), 2.0);
        let p = ModelParams::scalar(0.0, 1.0, 3.0).unwrap();
        assert_eq!(potential(&p, &Vector::from_element(1, 2.0)), 6.0);
        assert_eq!(potential(&p, &Vector::zeros(1)), 0.0);
    }

    #[test]
    fn reversibility_examples() {
        assert!(is_reversible(&ModelParams::scalar(1.3, 0.7, 2.0).unwrap()));
        let p = ModelParams::new(Mat::zeros(2, 2), Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        assert!(is_reversible(&p));
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let p = ModelParams::new(a, Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        assert!(!is_reversible(&p));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let text = r#"{"r":1,"A":[[0.0]],"B":[[1.0]],"S":[[1.0]]}"#;
        let p = ModelParams::from_json(text).unwrap();
        let back = serde_json::to_string(&p.to_file()).unwrap();
        assert_eq!(ModelParams::from_json(&back).unwrap(), p);
        let bad = r#"{"r":1,"A":[[0.0]],"B":[[1.0]],"S":[[1.0]],"C":1}"#;
        assert!(matches!(ModelParams::from_json(bad), Err(Error::Parse(_))));
        let wrong_r = r#"{"r":2,"A":[[0.0]],"B":[[1.0]],"S":[[1.0]]}"#;
        assert!(matches!(ModelParams::from_json(wrong_r), Err(Error::Dimension(_))));
    }
}
