mod args;
mod binary;
mod other;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use causens_core::ratio::RatioKind;
use clap::Parser;

use args::{Cli, Command};
use output::{exit_code, usage};

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = flag {
        return Ok(Some(t));
    }
    match std::env::var("CAUSENS_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| usage(format!("CAUSENS_THREADS: `{v}` is not a thread count"))),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = thread_count(cli.threads)? {
        if t == 0 {
            return Err(usage("--threads: need at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match &cli.command {
        Command::SaAte(a) => binary::sa_ate(a),
        Command::SaAtt(a) => binary::sa_att(a),
        Command::SaRr(a) => binary::sa_ratio(a, RatioKind::Rr, "sa-rr"),
        Command::SaOr(a) => binary::sa_ratio(a, RatioKind::Or, "sa-or"),
        Command::Contour(a) => other::contour(a),
        Command::Simulate(a) => other::simulate(a),
        Command::SaSurv(a) => other::sa_surv(a),
        Command::SaMulti(a) => other::sa_multi(a),
        Command::Calibrate(a) => binary::calibrate_cmd(a),
        Command::Bounds(a) => binary::bounds(a),
        Command::SaDiff(a) => binary::sa_diff(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
