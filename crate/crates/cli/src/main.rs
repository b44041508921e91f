use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dhg::oracle::FdConfig;
use dhg::NoiseId;
use dhg_cli::commands::{self, FdArgs, OracleForm};
use dhg_cli::CliResult;

#[derive(Parser)]
#[command(name = "dhg", version, about = "Train and check Hilbert-Galerkin critics for heat and Burgers control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a critic (or actor-critic) from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, or `oracle` for the closed-form reference.
    Evaluate {
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        config: PathBuf,
        /// Evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-mode coefficients of the closed-form heat solution.
    Oracle {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "tcc")]
        noise: NoiseId,
        #[arg(long, default_value_t = 250)]
        modes: usize,
        /// Print `J(·; 0)` instead of `V`.
        #[arg(long)]
        kolmogorov: bool,
    },
    /// Monte Carlo finite-difference value of the Burgers cost.
    FdOracle {
        /// Probe name or sparse coefficients such as `2,1.0;4,-0.5`.
        #[arg(long)]
        x0: String,
        #[arg(long, default_value = "none")]
        noise: NoiseId,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 251)]
        grid: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value = "explicit")]
        scheme: String,
        /// Drop the `x x′` term (heat equation with the same cost).
        #[arg(long)]
        linear: bool,
        /// Modes used to synthesize trace-class noise on the grid.
        #[arg(long, default_value_t = 250)]
        modes: usize,
    },
    /// Summarize every run directory below `--out`.
    Report {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let outcome = commands::cmd_train(&config, seed, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&outcome.evaluation)?);
            eprintln!("artifacts in {}", outcome.dir.display());
        }
        Command::Evaluate {
            checkpoint,
            config,
            seed,
            out,
        } => {
            let e = commands::cmd_evaluate(&checkpoint, &config, seed, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&e)?);
        }
        Command::Oracle {
            gamma,
            lambda,
            noise,
            modes,
            kolmogorov,
        } => {
            let form = if kolmogorov { OracleForm::Kolmogorov } else { OracleForm::Hjb };
            print!("{}", commands::cmd_oracle(gamma, lambda, noise, modes, form)?);
        }
        Command::FdOracle {
            x0,
            noise,
            paths,
            seed,
            grid,
            dt,
            steps,
            gamma,
            scheme,
            linear,
            modes,
        } => {
            let args = FdArgs {
                x0,
                noise,
                modes,
                config: FdConfig {
                    grid_points: grid,
                    dt,
                    steps,
                    mc_count: paths,
                    seed,
                    gamma,
                    nonlinear: !linear,
                    scheme: commands::parse_scheme(&scheme)?,
                },
            };
            print!("{}", commands::cmd_fd_oracle(&args)?);
        }
        Command::Report { out } => print!("{}", commands::cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
