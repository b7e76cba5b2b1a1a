use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use fkqho::flow::flow_path;
use fkqho::ground_state::ground_state;
use fkqho::model::validate;
use fkqho::particles::{backward_sample, dmc_run, enkf_run, hproc_run, EnkfVariant, HprocScheme, RunConfig, Trajectory};
use fkqho::riccati::{decay_constants, solve_care, RiccatiSolution, SolutionExport, DEFAULT_DELTA};
use fkqho::spectral::{build_basis, default_max_order, mehler_check, spectrum_table};
use fkqho::verify::{verify_model, Level};
use fkqho::{GaussianState, Mat, ModelParams, Vector};

use crate::failure::Failure;
use crate::opts::Opts;

/// Text written to the output plus an optional failure that still sets a nonzero exit.
pub struct Outcome {
    pub text: String,
    pub failure: Option<Failure>,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, failure: None }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn format(o: &Opts, default: Format) -> Result<Format, Failure> {
    match o.format.as_deref() {
        None => Ok(default),
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some(other) => Err(Failure::new("usage", format!("unknown format {other:?}, expected csv or json"))),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn read_model_text(o: &Opts) -> Result<(String, Value), Failure> {
    let path = o.model.as_deref().ok_or_else(|| Failure::new("usage", "--model is required"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new("io", format!("cannot read model {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)?;
    Ok((text, value))
}

/// The embedded solution when the file is `solve` output, `None` for a plain model file.
fn embedded_solution(value: &Value) -> Result<Option<SolutionExport>, Failure> {
    let inner = match value.get("solution") {
        Some(v) => v,
        None if value.get("p_inf").is_some() => value,
        None => return Ok(None),
    };
    Ok(Some(serde_json::from_value(inner.clone())?))
}

fn load_params(o: &Opts) -> Result<ModelParams, Failure> {
    let (text, value) = read_model_text(o)?;
    match embedded_solution(&value)? {
        Some(e) => Ok(ModelParams::from_file(&e.model)?),
        None => Ok(ModelParams::from_json(&text)?),
    }
}

fn load_solution(o: &Opts) -> Result<RiccatiSolution, Failure> {
    let (text, value) = read_model_text(o)?;
    match embedded_solution(&value)? {
        Some(e) => Ok(RiccatiSolution::from_export(&e)?),
        None => Ok(solve_care(&ModelParams::from_json(&text)?)?),
    }
}

fn load_eta0(o: &Opts, dim: usize) -> Result<GaussianState, Failure> {
    let Some(spec) = &o.eta0 else {
        return Ok(GaussianState::centered(Mat::identity(dim, dim))?);
    };
    let text = if spec.trim_start().starts_with('{') {
        spec.clone()
    } else {
        std::fs::read_to_string(Path::new(spec))
            .map_err(|e| Failure::new("io", format!("cannot read eta0 {spec}: {e}")))?
    };
    let raw: GaussianState = serde_json::from_str(&text)?;
    let eta = GaussianState::new(raw.mean, raw.cov)?;
    if eta.dim() != dim {
        return Err(Failure::new("dimension", format!("eta0 has dimension {}, model {dim}", eta.dim())));
    }
    Ok(eta)
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::new("usage", format!("--{name} must be positive, got {v}")))
    }
}

pub fn validate_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_params(o)?;
    let rep = validate(&p);
    let text = to_json(&json!({ "passed": rep.passed(), "checks": rep.checks }))?;
    let failure = (!rep.passed()).then(|| {
        let names: Vec<&str> = rep.failures().iter().map(|c| c.name.as_str()).collect();
        Failure::new("validation", format!("failed checks: {}", names.join(", ")))
    });
    Ok(Outcome { text, failure })
}

pub fn solve_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let sol = load_solution(o)?;
    let delta = positive("delta", o.delta.unwrap_or(DEFAULT_DELTA))?;
    let decay = decay_constants(&sol, delta)?;
    let gs = ground_state(&sol)?;
    let out = json!({
        "lambda0": sol.lambda0,
        "solution": sol.to_export(Some(decay)),
        "ground_state": gs.to_export(),
    });
    Ok(Outcome::ok(to_json(&out)?))
}

fn upper_triangle(m: &Mat) -> Vec<f64> {
    let r = m.nrows();
    let mut v = Vec::new();
    for i in 0..r {
        for j in i..r {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn flow_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let sol = load_solution(o)?;
    let r = sol.dim();
    let eta0 = load_eta0(o, r)?;
    let horizon = positive("T", o.horizon.unwrap_or(10.0))?;
    let steps = o.steps.unwrap_or(100).max(1);
    let path = flow_path(&sol, &eta0, horizon, steps)?;
    if format(o, Format::Csv)? == Format::Json {
        return Ok(Outcome::ok(to_json(&path)?));
    }
    let mut cols = vec!["t".to_string()];
    cols.extend((0..r).map(|i| format!("mean_{i}")));
    for i in 0..r {
        for j in i..r {
            cols.push(format!("cov_{i}{j}"));
        }
    }
    cols.extend(["log_mass", "log_mass_closed", "survival_probability", "cross_check_gap"].map(String::from));
    let mut text = cols.join(",") + "\n";
    for fs in &path {
        let mut cells = vec![format!("{:?}", fs.t)];
        cells.extend(fs.eta_t.mean.iter().map(|v| format!("{v:?}")));
        cells.extend(upper_triangle(&fs.eta_t.cov).iter().map(|v| format!("{v:?}")));
        for v in [fs.log_mass, fs.log_mass_closed, fs.log_mass.exp(), fs.cross_check_gap] {
            cells.push(format!("{v:?}"));
        }
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    Ok(Outcome::ok(text))
}

pub fn spectrum_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let sol = load_solution(o)?;
    let gs = ground_state(&sol)?;
    let basis = build_basis(&gs)?;
    let m = o.m.unwrap_or_else(|| default_max_order(sol.dim()));
    let entries = spectrum_table(&basis, m);
    if format(o, Format::Json)? == Format::Csv {
        let mut text = String::from("n,lambda_n,lambda_n_h\n");
        for e in &entries {
            let n: Vec<String> = e.n.iter().map(|k| k.to_string()).collect();
            text.push_str(&format!("{},{:?},{:?}\n", n.join(" "), e.lambda_n, e.lambda_n_h));
        }
        return Ok(Outcome::ok(text));
    }
    let out = json!({
        "lambda0": gs.lambda0,
        "rates": basis.rates,
        "max_order": m,
        "entries": entries,
    });
    Ok(Outcome::ok(to_json(&out)?))
}

pub fn mehler_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_params(o)?;
    let r = p.dim;
    if r > 3 {
        return Err(Failure::new("precondition", "mehler grid limited to r <= 3"));
    }
    let t = positive("t", o.t.unwrap_or(1.0))?;
    let m = o.m.unwrap_or(25);
    let radius = positive("radius", o.radius.unwrap_or(2.0))?;
    let points = o.points.unwrap_or(9).max(2);
    let axis: Vec<f64> = (0..points).map(|i| -radius + 2.0 * radius * i as f64 / (points - 1) as f64).collect();
    let total = points.pow(r as u32);
    let grid: Vec<Vector> = (0..total)
        .map(|mut k| {
            let mut x = Vector::zeros(r);
            for i in 0..r {
                x[i] = axis[k % points];
                k /= points;
            }
            x
        })
        .collect();
    let rep = mehler_check(&p.s, t, &grid, m)?;
    Ok(Outcome::ok(to_json(&rep)?))
}

fn run_config(o: &Opts, default_dt: f64) -> Result<RunConfig, Failure> {
    let seed = o.seed.ok_or_else(|| Failure::new("usage", "--seed is required for stochastic commands"))?;
    let horizon = positive("T", o.horizon.unwrap_or(10.0))?;
    let dt = positive("dt", o.dt.unwrap_or(default_dt))?;
    let mut cfg = RunConfig::new(o.n.unwrap_or(1000), horizon, dt, seed);
    cfg.record_every = o.record_every.unwrap_or_else(|| (cfg.steps() / 200).max(1));
    Ok(cfg)
}

fn enkf_variant(o: &Opts, scheme: &str, dim: usize) -> Result<EnkfVariant, Failure> {
    let v = match scheme {
        "enkf1" => "1",
        "enkf2" => "2",
        "enkf3" => "3",
        _ => o.variant.as_deref().unwrap_or("1"),
    };
    match v {
        "1" => Ok(EnkfVariant::Vanilla),
        "2" => Ok(EnkfVariant::Deterministic),
        "3" => Ok(EnkfVariant::transport(dim)),
        other => Err(Failure::new("usage", format!("unknown enkf variant {other:?}, expected 1, 2 or 3"))),
    }
}

pub fn simulate_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let scheme = o.scheme.as_deref().ok_or_else(|| Failure::new("usage", "--scheme is required"))?;
    let sol = load_solution(o)?;
    let r = sol.dim();
    let eta0 = load_eta0(o, r)?;
    let tr: Trajectory = match scheme {
        "dmc" => dmc_run(&sol.params, &eta0, &run_config(o, 0.01)?)?,
        "enkf" | "enkf1" | "enkf2" | "enkf3" => {
            let v = enkf_variant(o, scheme, r)?;
            enkf_run(&sol.params, &eta0, &v, &run_config(o, 0.005)?)?
        }
        "hproc" => {
            let hs = match o.variant.as_deref().unwrap_or("exact") {
                "exact" => HprocScheme::Exact,
                "euler" => HprocScheme::Euler,
                other => return Err(Failure::new("usage", format!("unknown hproc variant {other:?}, expected exact or euler"))),
            };
            hproc_run(&ground_state(&sol)?, &eta0, hs, &run_config(o, 0.01)?)?
        }
        "backward" => backward_sample(&sol, &eta0, &run_config(o, 0.005)?)?,
        other => {
            return Err(Failure::new(
                "usage",
                format!("unknown scheme {other:?}, expected dmc, enkf1, enkf2, enkf3, hproc or backward"),
            ))
        }
    };
    let text = match format(o, Format::Csv)? {
        Format::Csv => tr.to_csv(),
        Format::Json => to_json(&tr)?,
    };
    Ok(Outcome::ok(text))
}

pub fn verify_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let sol = load_solution(o)?;
    let level: Level = o.level.as_deref().unwrap_or("fast").parse()?;
    let rep = verify_model(&sol, level, o.seed.unwrap_or(0))?;
    let text = match format(o, Format::Json)? {
        Format::Json => to_json(&json!({ "passed": rep.passed(), "checks": rep.checks }))?,
        Format::Csv => {
            let mut t = String::from("check,value,threshold,passed\n");
            for c in &rep.checks {
                t.push_str(&format!("{},{:?},{:?},{}\n", c.name.replace(',', ";"), c.value, c.threshold, c.passed));
            }
            t
        }
    };
    let failure = (!rep.passed()).then(|| {
        let names: Vec<&str> = rep.failures().iter().map(|c| c.name.as_str()).collect();
        Failure::new("verification", format!("failed checks: {}", names.join(", ")))
    });
    Ok(Outcome { text, failure })
}
