use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pxfb_cli::config::load_config;
use pxfb_cli::error::{CliError, CliResult};
use pxfb_cli::{execute, replot, verify};

#[derive(Parser)]
#[command(name = "pxfb", version, about = "Run, verify and plot pxfb experiments")]
struct Cli {
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the output root of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment described by a TOML or JSON config.
    Run { config: PathBuf },
    /// Reruns a stored run and checks that metrics and certificates agree.
    Verify { run_dir: PathBuf },
    /// Regenerates the plots of a run directory.
    Plot { run_dir: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot configure {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Run { config } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            println!("{}", config.to_toml());
            let (dir, result) = execute(&config, cli.out.as_deref());
            if let Some(dir) = &dir {
                eprintln!("run directory: {}", dir.display());
            }
            let record = result?;
            println!("status: {}", record.status);
            for (k, v) in &record.metrics {
                println!("{k} = {v}");
            }
        }
        Command::Verify { run_dir } => {
            let record = verify(&run_dir)?;
            println!("verified {} ({} metrics match)", record.run_id, record.metrics.len());
        }
        Command::Plot { run_dir } => {
            let (written, notes) = replot(&run_dir)?;
            for w in written {
                println!("{}", run_dir.join(w).display());
            }
            for n in notes {
                eprintln!("note: {n}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
