use clap::{Parser, Subcommand};
use pmb_slat_cli::{cmd_replay, cmd_run, cmd_validate, default_out_dir, EXIT_OK};
use std::path::PathBuf;
use std::process::ExitCode;

/// Joint vehicle-feature tracking experiments: Monte-Carlo batches,
/// recorded-scan replay and configuration validation.
#[derive(Parser)]
#[command(name = "pmb-slat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured Monte-Carlo experiment and write CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = one per core). The PMB_SLAT_JOBS
        /// environment variable caps this.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory for the metric tables and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run one filter over a recorded world file, dumping per-step
    /// state snapshots.
    Replay {
        #[arg(long)]
        scans: PathBuf,
        /// One of: proposed, proposed_update, tombp1, tombp2.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, jobs, out } => {
            cmd_run(&config, &out.unwrap_or_else(default_out_dir), jobs)
        }
        Command::Replay {
            scans,
            variant,
            out,
        } => cmd_replay(&scans, &variant, &out.unwrap_or_else(default_out_dir)),
        Command::Validate { config } => match cmd_validate(&config) {
            Ok(report) => {
                print!("{report}");
                Ok(())
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
