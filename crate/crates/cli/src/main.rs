#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod denoise;
mod io;
mod simulate;
mod validate;

use config::{Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "tweedie",
    version,
    about = "Posterior functionals read off the observed marginal density"
)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Treat any unconverged row as a failure.
    #[arg(long)]
    strict: bool,

    /// Suppress progress output on stderr.
    #[arg(long)]
    quiet: bool,
}

/// A failed run and the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn malformed(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 2,
            error: error.into(),
        }
    }

    pub fn evaluation(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 3,
            error: error.into(),
        }
    }
}

pub struct Context {
    pub strict: bool,
    pub quiet: bool,
}

impl Context {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let ctx = Context {
        strict: args.strict,
        quiet: args.quiet,
    };
    let outcome = RunConfig::load(&args.config).and_then(|cfg| match cfg.command {
        Command::Denoise => denoise::run(&cfg, &ctx),
        Command::Validate => validate::run(&cfg, &ctx),
        Command::Simulate => simulate::run(&cfg, &ctx),
    });
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
