//! `mfd`: command-line driver for the mimetic parallel-gradient studies.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, Overrides, RunConfig, OUTPUT_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "mfd",
    version,
    about = "Mimetic parallel-gradient operators, wave and SAW models"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Convergence of the discrete parallel gradient on a smooth test function.
    OperatorConvergence(Overrides),
    /// Wave model run with an energy trace.
    WaveSim(Overrides),
    /// Shear-Alfvén-wave run with an energy trace.
    SawsSim(Overrides),
    /// Manufactured-solution convergence of the SAW system.
    MmsConvergence(Overrides),
    /// Discrete adjointness residual of the gradient pair.
    SkewnessCheck(Overrides),
    /// Real parts of the semi-discrete spectrum.
    Spectrum(Overrides),
    /// Matrix Market export of the assembled operators.
    ExportSystem(Overrides),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, flags) = match cli.command {
        Sub::OperatorConvergence(o) => (Command::OperatorConvergence, o),
        Sub::WaveSim(o) => (Command::WaveSim, o),
        Sub::SawsSim(o) => (Command::SawsSim, o),
        Sub::MmsConvergence(o) => (Command::MmsConvergence, o),
        Sub::SkewnessCheck(o) => (Command::SkewnessCheck, o),
        Sub::Spectrum(o) => (Command::Spectrum, o),
        Sub::ExportSystem(o) => (Command::ExportSystem, o),
    };
    let merged = match &flags.config {
        Some(path) => match Overrides::from_config_file(path) {
            Ok(file) => file.merge(flags),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => flags,
    };
    let env_out = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
    let cfg = match RunConfig::resolve(command, &merged, env_out) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: invalid value for `threads`: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
