use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "fkqho", version, about = "Solvable Feynman-Kac harmonic oscillator toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model hypotheses.
    Validate(Opts),
    /// Riccati fixed points, ground state and decay constants as JSON.
    Solve(Opts),
    /// Normalized flow moments and log-mass on a time grid.
    Flow(Opts),
    /// Eigenvalues of a reversible model.
    Spectrum(Opts),
    /// Mehler formula errors on a point grid.
    Mehler(Opts),
    /// Seeded particle simulation: dmc, enkf1, enkf2, enkf3, hproc or backward.
    Simulate(Opts),
    /// Run the self-check suite on a model.
    Verify(Opts),
}

impl Command {
    pub fn opts(&self) -> &Opts {
        match self {
            Command::Validate(o)
            | Command::Solve(o)
            | Command::Flow(o)
            | Command::Spectrum(o)
            | Command::Mehler(o)
            | Command::Simulate(o)
            | Command::Verify(o) => o,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Solve(_) => "solve",
            Command::Flow(_) => "flow",
            Command::Spectrum(_) => "spectrum",
            Command::Mehler(_) => "mehler",
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
        }
    }
}

/// Options shared by every subcommand; a JSON config file supplies defaults that flags override.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opts {
    /// JSON file with option values, keys named like the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Model file, or the output of `solve`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of particles.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Spectral truncation order.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Sampler or scheme variant: 1, 2, 3 for enkf; exact or euler for hproc.
    #[arg(long)]
    pub variant: Option<String>,
    /// Sampler for `simulate`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Initial law, as a JSON file or inline `{"mean": [..], "cov": [[..]]}`.
    #[arg(long)]
    pub eta0: Option<String>,
    /// Number of time steps for `flow`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// fast or full for `verify`.
    #[arg(long)]
    pub level: Option<String>,
    /// Write every k-th step of a simulation.
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Half-width of the `mehler` grid.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Points per axis of the `mehler` grid.
    #[arg(long)]
    pub points: Option<usize>,
}

macro_rules! overlay {
    ($flags:expr, $base:expr, $($f:ident),*) => {
        Opts { config: $flags.config.clone(), $($f: $flags.$f.clone().or($base.$f.clone()),)* }
    };
}

impl Opts {
    /// Merges the config file, if any, under the command-line flags.
    pub fn resolve(&self) -> Result<Opts, Failure> {
        let Some(path) = &self.config else { return Ok(self.clone()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new("io", format!("cannot read config {}: {e}", path.display())))?;
        let base: Opts = serde_json::from_str(&text).map_err(|e| Failure::new("config", e.to_string()))?;
        Ok(overlay!(
            self, base, model, out, format, seed, t, horizon, dt, n, m, delta, variant, scheme, eta0, steps, level,
            record_every, radius, points
        ))
    }
}
