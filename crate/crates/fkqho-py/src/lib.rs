//! Python bindings: matrices travel as nested lists of floats.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fkqho::flow::propagate as propagate_flow;
use fkqho::ground_state::ground_state;
use fkqho::linalg::{from_rows, to_rows};
use fkqho::model::validate as validate_model;
use fkqho::particles::{backward_sample, dmc_run, enkf_run, hproc_run, EnkfVariant, HprocScheme, RunConfig};
use fkqho::riccati::{solve_care, RiccatiSolution};
use fkqho::spectral::{build_basis, mehler_check, spectrum_table};
use fkqho::verify::{verify_model, Level};
use fkqho::{Error, GaussianState, Mat, ModelParams, Vector};

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::Inconsistency(_) | Error::Explosion { .. } | Error::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn model(a: &Rows, b: &Rows, s: &Rows) -> fkqho::Result<ModelParams> {
    ModelParams::new(from_rows(a, "A")?, from_rows(b, "B")?, from_rows(s, "S")?)
}

fn solution(a: &Rows, b: &Rows, s: &Rows) -> fkqho::Result<RiccatiSolution> {
    solve_care(&model(a, b, s)?)
}

fn state(mean: Option<Vec<f64>>, cov: Option<Rows>, dim: usize) -> fkqho::Result<GaussianState> {
    let mean = mean.map(Vector::from_vec).unwrap_or_else(|| Vector::zeros(dim));
    let cov = match cov {
        Some(c) => from_rows(&c, "cov")?,
        None => Mat::identity(dim, dim),
    };
    GaussianState::new(mean, cov)
}

fn simulate_csv(
    a: &Rows,
    b: &Rows,
    s: &Rows,
    scheme: &str,
    cfg: RunConfig,
    mean: Option<Vec<f64>>,
    cov: Option<Rows>,
) -> fkqho::Result<String> {
    let sol = solution(a, b, s)?;
    let eta0 = state(mean, cov, sol.dim())?;
    let tr = match scheme {
        "dmc" => dmc_run(&sol.params, &eta0, &cfg)?,
        "enkf1" => enkf_run(&sol.params, &eta0, &EnkfVariant::Vanilla, &cfg)?,
        "enkf2" => enkf_run(&sol.params, &eta0, &EnkfVariant::Deterministic, &cfg)?,
        "enkf3" => enkf_run(&sol.params, &eta0, &EnkfVariant::transport(sol.dim()), &cfg)?,
        "hproc" => hproc_run(&ground_state(&sol)?, &eta0, HprocScheme::Exact, &cfg)?,
        "backward" => backward_sample(&sol, &eta0, &cfg)?,
        other => return Err(Error::Domain(format!("unknown scheme {other:?}"))),
    };
    Ok(tr.to_csv())
}

/// Hypothesis checks as `(name, passed, value, threshold)` tuples.
#[pyfunction]
fn validate(a: Rows, b: Rows, s: Rows) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let p = model(&a, &b, &s).map_err(py_err)?;
    Ok(validate_model(&p).checks.into_iter().map(|c| (c.name, c.passed, c.value, c.threshold)).collect())
}

/// Riccati fixed points and the zero-point energy.
#[pyfunction]
fn solve<'py>(py: Python<'py>, a: Rows, b: Rows, s: Rows) -> PyResult<Bound<'py, PyDict>> {
    let sol = solution(&a, &b, &s).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("lambda0", sol.lambda0)?;
    d.set_item("p_inf", to_rows(&sol.p_inf))?;
    d.set_item("p_inf_minus", to_rows(&sol.p_inf_minus))?;
    d.set_item("q_inf", to_rows(&sol.q_inf))?;
    d.set_item("drift_h", to_rows(&sol.drift_h))?;
    d.set_item("drift_filter", to_rows(&sol.drift_filter))?;
    Ok(d)
}

/// Normalized flow at time `t` from `N(mean, cov)`.
#[pyfunction]
#[pyo3(signature = (a, b, s, t, mean=None, cov=None))]
fn propagate<'py>(
    py: Python<'py>,
    a: Rows,
    b: Rows,
    s: Rows,
    t: f64,
    mean: Option<Vec<f64>>,
    cov: Option<Rows>,
) -> PyResult<Bound<'py, PyDict>> {
    let sol = solution(&a, &b, &s).map_err(py_err)?;
    let eta0 = state(mean, cov, sol.dim()).map_err(py_err)?;
    let fs = propagate_flow(&sol, &eta0, t).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mean", fs.eta_t.mean.iter().copied().collect::<Vec<f64>>())?;
    d.set_item("cov", to_rows(&fs.eta_t.cov))?;
    d.set_item("log_mass", fs.log_mass)?;
    d.set_item("log_mass_closed", fs.log_mass_closed)?;
    d.set_item("survival_probability", fs.log_mass.exp())?;
    Ok(d)
}

/// `(multi-index, λ_n)` pairs of a reversible model up to total order `max_order`.
#[pyfunction]
fn spectrum(a: Rows, b: Rows, s: Rows, max_order: usize) -> PyResult<Vec<(Vec<usize>, f64)>> {
    let sol = solution(&a, &b, &s).map_err(py_err)?;
    let gs = ground_state(&sol).map_err(py_err)?;
    let basis = build_basis(&gs).map_err(py_err)?;
    Ok(spectrum_table(&basis, max_order).into_iter().map(|e| (e.n, e.lambda_n)).collect())
}

/// `(series_error, propagator_error)` of Mehler's formula on a 1D grid of `points` in `[−radius, radius]`.
#[pyfunction]
#[pyo3(signature = (s, t=1.0, max_order=25, points=9, radius=2.0))]
fn mehler(s: f64, t: f64, max_order: usize, points: usize, radius: f64) -> PyResult<(f64, f64)> {
    let n = points.max(2);
    let grid: Vec<Vector> =
        (0..n).map(|i| Vector::from_element(1, -radius + 2.0 * radius * i as f64 / (n - 1) as f64)).collect();
    let rep = mehler_check(&Mat::from_element(1, 1, s), t, &grid, max_order).map_err(py_err)?;
    Ok((rep.series_error, rep.propagator_error))
}

/// Trajectory CSV of a seeded particle run.
#[pyfunction]
#[pyo3(signature = (a, b, s, scheme, n, horizon, dt, seed, mean=None, cov=None, record_every=1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    a: Rows,
    b: Rows,
    s: Rows,
    scheme: &str,
    n: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    mean: Option<Vec<f64>>,
    cov: Option<Rows>,
    record_every: usize,
) -> PyResult<String> {
    let mut cfg = RunConfig::new(n, horizon, dt, seed);
    cfg.record_every = record_every;
    let scheme = scheme.to_string();
    py.detach(move || simulate_csv(&a, &b, &s, &scheme, cfg, mean, cov)).map_err(py_err)
}

/// `(passed, [(name, passed, value, threshold), …])` of the self-check suite.
#[pyfunction]
#[pyo3(signature = (a, b, s, level="fast", seed=0))]
fn verify(a: Rows, b: Rows, s: Rows, level: &str, seed: u64) -> PyResult<(bool, Vec<(String, bool, f64, f64)>)> {
    let sol = solution(&a, &b, &s).map_err(py_err)?;
    let level: Level = level.parse().map_err(py_err)?;
    let rep = verify_model(&sol, level, seed).map_err(py_err)?;
    let passed = rep.passed();
    Ok((passed, rep.checks.into_iter().map(|c| (c.name, c.passed, c.value, c.threshold)).collect()))
}

#[pymodule]
fn fkqho_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(mehler, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
