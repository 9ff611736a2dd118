mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "popxfer",
    version,
    about = "Detuning-controlled population transfer in a driven three-level system"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (CSV or JSON depending on the command)
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Builtin protocol name or path to a JSON schedule
    #[arg(long, global = true, value_name = "NAME|PATH")]
    protocol: Option<String>,
    /// Couple the excited level to the sink (rate 10/T unless configured)
    #[arg(long, global = true, value_enum)]
    sink: Option<Switch>,
    /// Protocol duration in units of 1/Omega_0
    #[arg(long = "T", global = true, value_name = "T")]
    total_time: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Restricted,
    Wide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Ansatz1,
    ParityPolys,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Lambda,
    Ladder,
    DephasingG,
    DephasingE,
    DephasingF,
    /// All three dephasing curves with a leading level column
    Dephasing,
    Stray,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate a protocol and write the trajectory CSV
    Simulate,
    /// Train the recurrent policy with REINFORCE
    Train {
        /// Hyperparameter preset used when the config has no train section
        #[arg(long, value_enum, default_value = "restricted")]
        preset: Preset,
        /// Override the number of epochs
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint path (defaults to the output path with a .checkpoint.json suffix)
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Powell search over polynomial detuning pairs
    OptimizePoly {
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Powell search over an analytic ansatz family
    OptimizeAnsatz {
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Robustness sweep over noise rates or stray detunings
    Sweep {
        #[arg(long, value_enum)]
        scenario: Option<SweepKind>,
    },
    /// Final populations as the protocol is stretched over a range of durations
    ScanTime {
        #[arg(long, default_value_t = 20.0)]
        t_min: f64,
        #[arg(long, default_value_t = 80.0)]
        t_max: f64,
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// Constant-detuning comparison against a reference protocol
    RamanScan {
        #[arg(long, default_value_t = 10.0)]
        dp_min: f64,
        #[arg(long, default_value_t = 50.0)]
        dp_max: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Validate a checkpoint and print its summary
    CheckpointInfo {
        /// Checkpoint file
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        s == Switch::On
    }
}
