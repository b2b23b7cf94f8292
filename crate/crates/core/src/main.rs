use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nonneg_sdde::cli::{parse_model_spec, run_command, Command, Flags};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Existence and non-negativity verdicts.
    Check,
    /// Moving-average kernel as CSV.
    Kernel,
    /// Stationary sample path as CSV.
    Simulate,
    /// CARMA(3,2) classifier sweep as CSV.
    Region,
    /// Multivariate verdict bundle.
    Mcheck,
}

/// Stationary SDDE and CARMA models driven by subordinators.
#[derive(Debug, Parser)]
#[command(name = "nonneg-sdde", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON model spec.
    spec: PathBuf,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed for `simulate`.
    #[arg(long)]
    seed: Option<u64>,
    /// Time step of kernels and paths.
    #[arg(long)]
    dt: Option<f64>,
    /// Kernel horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Highest derivative order of the complete-monotonicity check.
    #[arg(long)]
    nmax: Option<usize>,
    /// Step of the `region` sweep.
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let text = match std::fs::read_to_string(&args.spec) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.spec.display());
            return ExitCode::from(2);
        }
    };
    let spec = match parse_model_spec(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("invalid spec at {}: {}", if e.pointer.is_empty() { "/" } else { &e.pointer }, e.message);
            return ExitCode::from(2);
        }
    };
    let command = match args.command {
        Cmd::Check => Command::Check,
        Cmd::Kernel => Command::Kernel,
        Cmd::Simulate => Command::Simulate,
        Cmd::Region => Command::Region,
        Cmd::Mcheck => Command::Mcheck,
    };
    let flags = Flags {
        out: args.out,
        seed: args.seed,
        dt: args.dt,
        horizon: args.horizon,
        n_max: args.nmax,
        grid_step: args.grid_step,
    };
    match run_command(command, &spec, &flags) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
