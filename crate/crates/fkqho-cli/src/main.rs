mod commands;
mod failure;
mod opts;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use commands::Outcome;
use failure::Failure;
use opts::{Cli, Command};

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("FKQHO_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::new("usage", format!("FKQHO_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new("usage", e.to_string()))
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    init_threads()?;
    let o = cli.command.opts().resolve()?;
    let outcome = match &cli.command {
        Command::Validate(_) => commands::validate_cmd(&o),
        Command::Solve(_) => commands::solve_cmd(&o),
        Command::Flow(_) => commands::flow_cmd(&o),
        Command::Spectrum(_) => commands::spectrum_cmd(&o),
        Command::Mehler(_) => commands::mehler_cmd(&o),
        Command::Simulate(_) => commands::simulate_cmd(&o),
        Command::Verify(_) => commands::verify_cmd(&o),
    }?;
    match &o.out {
        Some(path) => std::fs::write(path, &outcome.text)
            .map_err(|e| Failure::new("io", format!("cannot write {}: {e}", path.display())))?,
        None => std::io::stdout().write_all(outcome.text.as_bytes())?,
    }
    Ok(outcome)
}

fn report(cmd: &str, f: &Failure) {
    let body = serde_json::json!({ "command": cmd, "error": f.error, "message": f.message });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome { failure: None, .. }) => ExitCode::SUCCESS,
        Ok(Outcome { failure: Some(f), .. }) | Err(f) => {
            report(cli.command.name(), &f);
            ExitCode::FAILURE
        }
    }
}
