use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bridgectl::{init_threads, run_command, CliError, Command, RunConfig};
use clap::Parser;

/// Optimal boundary control of the stochastic Neumann heat equation.
#[derive(Debug, Parser)]
#[command(name = "bridgectl", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn fail(err: &CliError, out_dir: Option<&PathBuf>) -> ExitCode {
    let report = err.report();
    let text = serde_json::to_string_pretty(&report).expect("failure report serializes");
    eprintln!("{text}");
    if let Some(dir) = out_dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("failure.json"), format!("{text}\n"));
        }
    }
    ExitCode::from(report.exit_code as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = init_threads() {
        return fail(&e, args.out.as_ref());
    }
    let cfg = match load(&args) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e, args.out.as_ref()),
    };
    match run_command(args.command, &cfg) {
        Ok(outcome) => {
            // a closed stdout must not turn a finished run into a panic
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", outcome.summary);
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                let _ = writeln!(out, "checks failed");
                ExitCode::FAILURE
            }
        }
        Err(e) => fail(&e, Some(&cfg.out_dir)),
    }
}
