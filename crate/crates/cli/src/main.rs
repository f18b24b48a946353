//! `nesr`: dataset generation, training, evaluation, benchmarks and
//! single-image reconstruction.

mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use nesr_core::NesrError;

use crate::commands::{run, Cli};

fn exit_code(e: &NesrError) -> u8 {
    match e {
        NesrError::Usage(_) | NesrError::Config(_) | NesrError::Domain(_) | NesrError::Json(_) => 1,
        NesrError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(std::io::stderr(), "error: {line}");
            ExitCode::from(exit_code(&e))
        }
    }
}
