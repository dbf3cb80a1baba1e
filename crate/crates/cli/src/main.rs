use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmex_cli::commands::output_dir;
use lmex_cli::{parse_config, run_command, CliError, Command, RunContext};

const THREADS_ENV: &str = "LMEX_THREADS";
const OUTPUT_ENV: &str = "LMEX_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "lmex", version, about = "Exchange master equation simulations and convergence benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate the configured system and write a trajectory table.
    Simulate { config: PathBuf },
    /// Check the eigenrelations of every configured exchange group.
    VerifyGroup { config: PathBuf },
    /// Step-size sweep of the traditional and configured methods.
    Sweep { config: PathBuf },
    /// Randomized robustness trials for a system family.
    Study { config: PathBuf },
    /// LME2 vs truncated Dyson vs reference sweep, with timing.
    Lme6Bench { config: PathBuf },
    /// Print the configuration with every default filled in.
    CheckConfig { config: PathBuf },
}

fn threads() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.is_empty() => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}: expected a positive integer, got {v:?}")))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(n)
        }
        _ => Ok(rayon::current_num_threads()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cmd, path) = match cli.command {
        Cmd::Simulate { config } => (Some(Command::Simulate), config),
        Cmd::VerifyGroup { config } => (Some(Command::VerifyGroup), config),
        Cmd::Sweep { config } => (Some(Command::Sweep), config),
        Cmd::Study { config } => (Some(Command::Study), config),
        Cmd::Lme6Bench { config } => (Some(Command::Lme6Bench), config),
        Cmd::CheckConfig { config } => (None, config),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    let Some(cmd) = cmd else {
        print!("{}", cfg.to_toml());
        return Ok(());
    };
    let ctx = RunContext {
        output_dir: output_dir(&cfg, std::env::var(OUTPUT_ENV).ok()),
        config_path: path.display().to_string(),
        threads: threads()?,
    };
    for f in run_command(cmd, &cfg, &ctx)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
