//! `elssa` command-line frontend.
//!
//! Exit codes: 0 on success, 1 for usage, input and I/O errors, 2 when a
//! numerical stage fails.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn run(cli: Cli) -> elssa::Result<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(elssa::Error::InvalidInput("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| elssa::Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::DetectLines(a) => commands::detect(a),
        Command::Charlen(a) => commands::charlen(a),
        Command::Unstitch(a) => commands::unstitch(a),
        Command::Synth(a) => commands::synth(a),
        Command::Esprit(a) => commands::esprit(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
