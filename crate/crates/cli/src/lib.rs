//! Command-line front end for polynomial template protection experiments.
//!
//! Every subcommand accepts the same tunables as flags or through a
//! `--config` file of `key = value` lines. Flags override the file, which
//! overrides the built-in defaults. Randomized commands need `--seed`.
//!
//! Exit codes: 0 success, 2 usage or invalid parameter, 3 data or format
//! error, 4 numerical failure, 5 key selection exhausted.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use crate::commands::{
    AttackArgs, EvalArgs, PipelineArgs, ProtectArgs, ReportArgs, SelectArgs, SynthArgs,
};
use crate::error::{CliError, CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "polyprotect", version, about = "Polynomial face-template protection and inversion attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    GenSynth(SynthArgs),
    Protect(ProtectArgs),
    Eval(EvalArgs),
    Attack(AttackArgs),
    SelectKeys(SelectArgs),
    Report(ReportArgs),
    Pipeline(PipelineArgs),
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::GenSynth(a) => commands::gen_synth(a, &a.tunables.resolve()?),
        Command::Protect(a) => commands::protect(a, &a.tunables.resolve()?),
        Command::Eval(a) => commands::eval(a, &a.tunables.resolve()?),
        Command::Attack(a) => commands::attack(a, &a.tunables.resolve()?).map(drop),
        Command::SelectKeys(a) => commands::select_keys(a, &a.tunables.resolve()?).map(drop),
        Command::Report(a) => commands::report(a, &a.tunables.resolve()?).map(drop),
        Command::Pipeline(a) => commands::pipeline(a, &a.tunables.resolve()?).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(polyprotect::Error::Solver(_)) = e {
                eprintln!("hint: loosen the solver tolerances or raise --max-iters");
            }
            e.exit_code()
        }
    }
}
