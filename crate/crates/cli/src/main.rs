use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rs3::harness::{self, io, HarnessError};

/// Risk-sensitive stochastic search experiments.
#[derive(Parser)]
#[command(name = "rs3", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a TOML or JSON config.
    Run { config: PathBuf },
    /// Print the defaults and published constants of a system.
    Describe { system: String },
    /// Mean, VaR and CVaR of a cost file with one value per line.
    Stats {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
    },
}

/// Print a line, tolerating a closed pipe such as `rs3 describe pendulum | head`.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let summary = harness::run_campaign_file(&config)?;
            for cell in &summary.cells {
                emit(&format!(
                    "cell {} sigma={} episodes={} mean={} var={} cvar={} ({:.1}s)",
                    cell.cell,
                    cell.noise_level,
                    cell.episodes,
                    cell.summary.mean,
                    cell.summary.var_hat,
                    cell.summary.cvar_hat,
                    cell.wall_clock_secs
                ));
            }
            emit(&format!("wrote {}", summary.output_dir.display()));
        }
        Command::Describe { system } => emit(&harness::describe(&system)?),
        Command::Stats { csv, gamma } => {
            let s = io::stats(&csv, gamma)?;
            let json = serde_json::json!({ "gamma": gamma, "mean": s.mean, "var": s.var_hat, "cvar": s.cvar_hat });
            emit(&json.to_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
