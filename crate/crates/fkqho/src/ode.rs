//! Fixed-step RK4 used as the brute-force oracle for every closed-form flow.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Dense output of an RK4 integration.
#[derive(Debug, Clone)]
pub struct OdePath {
    pub t: Vec<f64>,
    pub y: Vec<Vector>,
    /// Richardson estimate `16 ‖y_h − y_{h/2}‖ / 15` of the final-time error.
    pub error_estimate: f64,
}

impl OdePath {
    pub fn last(&self) -> &Vector {
        self.y.last().expect("path is never empty")
    }
}

pub fn rk4_step<F>(f: &F, t: f64, y: &Vector, h: f64) -> Vector
where
    F: Fn(f64, &Vector) -> Vector,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn run<F>(f: &F, y0: &Vector, t0: f64, t1: f64, steps: usize, keep: bool) -> Result<(Vec<f64>, Vec<Vector>)>
where
    F: Fn(f64, &Vector) -> Vector,
{
    let h = (t1 - t0) / steps as f64;
    let mut ts = vec![t0];
    let mut ys = vec![y0.clone()];
    let mut y = y0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        y = rk4_step(f, t, &y, h);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("ode state became non-finite at t = {}", t + h)));
        }
        if keep {
            ts.push(t0 + (k + 1) as f64 * h);
            ys.push(y.clone());
        }
    }
    if !keep {
        ts.push(t1);
        ys.push(y);
    }
    Ok((ts, ys))
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` with `steps` RK4 steps.
pub fn integrate_ode<F>(f: F, y0: &Vector, t0: f64, t1: f64, steps: usize) -> Result<OdePath>
where
    F: Fn(f64, &Vector) -> Vector,
{
    if steps == 0 {
        return Err(Error::Domain("ode needs at least one step".into()));
    }
    if !t0.is_finite() || !t1.is_finite() || !y0.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("ode inputs must be finite".into()));
    }
    let (t, y) = run(&f, y0, t0, t1, steps, true)?;
    let (_, fine) = run(&f, y0, t0, t1, 2 * steps, false)?;
    let error_estimate = 16.0 * (y.last().unwrap() - fine.last().unwrap()).norm() / 15.0;
    Ok(OdePath { t, y, error_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_convergence() {
        let y0 = Vector::from_element(1, 1.0);
        let exact = (-1.0f64).exp();
        let err = |n| {
            let p = integrate_ode(|_, y: &Vector| -y, &y0, 0.0, 1.0, n).unwrap();
            (p.last()[0] - exact).abs()
        };
        let e1 = err(10);
        let e2 = err(20);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.1, "observed order {order}");
    }

    #[test]
    fn richardson_estimate_tracks_error() {
        let y0 = Vector::from_element(1, 1.0);
        let p = integrate_ode(|_, y: &Vector| -y, &y0, 0.0, 2.0, 16).unwrap();
        let err = (p.last()[0] - (-2.0f64).exp()).abs();
        assert!(p.error_estimate > 0.3 * err && p.error_estimate < 3.0 * err);
        assert_eq!(p.t.len(), 17);
    }

    #[test]
    fn rejects_non_finite() {
        let y0 = Vector::from_element(1, f64::NAN);
        assert!(integrate_ode(|_, y: &Vector| -y, &y0, 0.0, 1.0, 4).is_err());
    }
}
