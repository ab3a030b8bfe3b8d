mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;

use crate::args::Cli;
use crate::output::{manifest_path, to_json, write_atomic, Manifest};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAF_LOG", "warn")).init();
    let cli = match args::parse(std::env::args_os()) {
        Ok(cli) => cli,
        // Usage errors exit with 2; --help and --version with 0.
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: {} reported failing checks", cli.command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building the worker pool")?;
    info!("{} with {workers} workers", cli.command.name());

    let start = Instant::now();
    let outcome = pool.install(|| commands::execute(&cli.command))?;
    let out = cli.command.output().out.as_deref();
    let manifest = Manifest {
        program: "graf",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        config: &cli.command,
        seed: cli.command.seed(),
        workers,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        output: out,
    };
    let manifest = to_json(&manifest)?;

    match out {
        Some(path) => {
            write_atomic(path, &outcome.bytes)?;
            write_atomic(&manifest_path(path), &manifest)?;
        }
        None => {
            std::io::stdout().lock().write_all(&outcome.bytes)?;
            std::io::stderr().lock().write_all(&manifest)?;
        }
    }
    Ok(outcome.passed)
}
