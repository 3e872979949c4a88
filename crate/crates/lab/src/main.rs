use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feller_lab::{run, Command, Common, Overrides, ProbeKind};

#[derive(Parser)]
#[command(name = "feller-lab", version, about = "Feller-property diagnostics for Lévy-driven SDEs")]
struct Cli {
    /// Worker threads for Monte Carlo fan-out (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Shared {
    /// Library scenario name or path to a scenario JSON file.
    #[arg(long)]
    scenario: Option<String>,
    /// Budget configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, or a `.json` file for the main result.
    #[arg(long, default_value = "feller-out")]
    out: PathBuf,
    /// Overrides the exponent of a power-type coefficient.
    #[arg(long)]
    beta: Option<f64>,
    /// Overrides the index of the stable part of the driver.
    #[arg(long)]
    alpha: Option<f64>,
    /// Master seed; beats FELLER_LAB_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Sub {
    /// Classify the scenario as Feller or not.
    Classify {
        #[command(flatten)]
        shared: Shared,
        /// Probe radii, comma separated; defaults to the config's.
        #[arg(long = "r", value_delimiter = ',')]
        r: Vec<f64>,
    },
    /// Condition-mass profiles over |x| at each radius.
    Profile {
        #[command(flatten)]
        shared: Shared,
        /// Probe radii, comma separated; defaults to the config's.
        #[arg(long = "r", value_delimiter = ',')]
        r: Vec<f64>,
    },
    /// Simulate paths and export CSV and binary frames.
    Simulate(Shared),
    /// Run one Monte Carlo probe.
    Diagnose {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_enum)]
        probe: ProbeKind,
    },
    /// Classification plus decay and martingale probes, with CSV plot data.
    Report(Shared),
    /// Regression suite over the built-in library.
    Selftest(Shared),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, shared) = match cli.command {
        Sub::Classify { shared, r } => (Command::Classify { radii: r }, shared),
        Sub::Profile { shared, r } => (Command::Profile { radii: r }, shared),
        Sub::Simulate(s) => (Command::Simulate, s),
        Sub::Diagnose { shared, probe } => (Command::Diagnose { probe }, shared),
        Sub::Report(s) => (Command::Report, s),
        Sub::Selftest(s) => (Command::Selftest, s),
    };
    let common = Common {
        scenario: shared.scenario,
        config: shared.config,
        out: shared.out,
        overrides: Overrides { beta: shared.beta, alpha: shared.alpha },
        seed: shared.seed,
        threads: cli.threads,
        x0: shared.x0,
    };
    match run(&cmd, &common) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
