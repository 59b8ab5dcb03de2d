mod commands;
mod config;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use commands::Outcome;
use config::{resolve, CliError, Layered, Resolution};

const EXIT_RUNTIME: u8 = 1;
const EXIT_STRICT: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "hbbm", version, about = "Branching Brownian motion on the hyperbolic plane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Simulate(commands::SimulateFlags),
    Exitlaw(commands::ExitlawFlags),
    Dimension(commands::DimensionFlags),
    Moments(commands::MomentsFlags),
    Holder(commands::HolderFlags),
    Validate(commands::ValidateFlags),
    Growth(commands::GrowthFlags),
}

fn execute<F: Layered>(
    flags: &F,
    run: impl FnOnce(&F::Resolved, &Path) -> Result<Outcome, CliError>,
) -> Result<Outcome, CliError>
where
    F::Resolved: Serialize,
{
    let common = flags.common().clone();
    let Resolution { config, seed_source } = resolve(flags)?;
    if let Some(n) = common.threads {
        config::check(n >= 1, "threads", "must be at least 1")?;
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    commands::prepare_out(&common.out)?;
    commands::write_json(&common.out, "config.json", &config)?;
    let start = Instant::now();
    let outcome = run(&config, &common.out)?;
    let meta = json!({
        "seed": serde_json::to_value(&config).ok().and_then(|c| c.get("seed").cloned()),
        "seed-source": seed_source,
        "threads": common.threads,
        "wall-time-seconds": start.elapsed().as_secs_f64(),
        "cap-hit": outcome.cap_hit,
        "warnings": outcome.warnings,
        "breaches": outcome.breaches,
        "version": env!("CARGO_PKG_VERSION"),
    });
    commands::write_json(&common.out, "meta.json", &meta)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for b in &outcome.breaches {
        eprintln!("breach: {b}");
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let (strict, result) = match &cli.command {
        Command::Simulate(f) => (f.common.strict, execute(f, commands::simulate)),
        Command::Exitlaw(f) => (f.common.strict, execute(f, commands::exitlaw)),
        Command::Dimension(f) => (f.common.strict, execute(f, commands::dimension)),
        Command::Moments(f) => (f.common.strict, execute(f, commands::moments)),
        Command::Holder(f) => (f.common.strict, execute(f, commands::holder)),
        Command::Validate(f) => (f.common.strict, execute(f, commands::validate_cmd)),
        Command::Growth(f) => (f.common.strict, execute(f, commands::growth)),
    };
    match result {
        Ok(outcome) if strict && !outcome.breaches.is_empty() => ExitCode::from(EXIT_STRICT),
        Ok(_) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
