//! `robust-bridge` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_bridge::calibration::IngestMode;
use robust_bridge::montecarlo::Scenario;
use robust_bridge::Case;

pub const THREADS_VAR: &str = "ROBUST_BRIDGE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "robust-bridge",
    version,
    about = "Worst-case bounds for the integral of a CIR bridge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Parameter file (key=value: a, r, sigma, a_file, sigma_file). Defaults to the
    /// reference parameters a=0.03673, r=0.71, sigma=0.7252.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Time steps on [0, 1] [default: 1000000; 10000 for simulate]
    #[arg(long, global = true)]
    pub n_steps: Option<usize>,
    /// Use 100000 steps unless --n-steps is given
    #[arg(long, global = true)]
    pub fast: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bound value, distorted expectation and entropy at one psi (exit 2 on blow-up)
    #[command(allow_negative_numbers = true)]
    Bound {
        #[arg(long)]
        case: Case,
        #[arg(long)]
        psi: f64,
        /// Output CSV; stdout if omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate table1.csv (lower) and table2.csv (upper)
    Tables {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Bound results over an evenly spaced psi range
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[arg(long)]
        case: Case,
        #[arg(long, default_value_t = 0.0)]
        psi_min: f64,
        #[arg(long)]
        psi_max: f64,
        #[arg(long, default_value_t = 0.1)]
        psi_step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Dump the Riccati solution A(t)
    #[command(allow_negative_numbers = true)]
    Riccati {
        #[arg(long)]
        case: Case,
        #[arg(long)]
        psi: f64,
        /// Maximum number of data rows
        #[arg(long, default_value_t = 1001)]
        rows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo ensemble of benchmark or worst-case paths
    #[command(allow_negative_numbers = true)]
    Simulate {
        /// benchmark, lower or upper
        #[arg(long, default_value = "benchmark")]
        case: Scenario,
        #[arg(long, default_value_t = 0.0)]
        psi: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = robust_bridge::montecarlo::DEFAULT_EPSILON)]
        epsilon: f64,
        /// Per-path CSV (path,integral,entropy,end_value)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of leading paths to dump as trajectories
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
        /// Trajectory CSV (path,t,x)
        #[arg(long, requires = "trajectories")]
        trajectory_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sufficient condition, feasibility interval and exponential-moment check at psi
    #[command(allow_negative_numbers = true)]
    Check {
        #[arg(long)]
        psi: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Fit constant a, r, sigma to binned count data
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        /// raw or normalized
        #[arg(long, default_value = "normalized")]
        mode: IngestMode,
        #[arg(long, default_value_t = 24)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().map_err(|_| {
            anyhow::anyhow!("{THREADS_VAR} must be a nonnegative integer, got {v:?}")
        })?;
        robust_bridge::exec::configure_threads(n);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Bound {
            case,
            psi,
            out,
            common,
        } => commands::bound(&common, case, psi, out),
        Command::Tables { out_dir, common } => commands::tables(&common, &out_dir),
        Command::Sweep {
            case,
            psi_min,
            psi_max,
            psi_step,
            out,
            common,
        } => commands::sweep(&common, case, psi_min, psi_max, psi_step, out),
        Command::Riccati {
            case,
            psi,
            rows,
            out,
            common,
        } => commands::riccati(&common, case, psi, rows, out),
        Command::Simulate {
            case,
            psi,
            paths,
            seed,
            epsilon,
            out,
            trajectories,
            trajectory_out,
            common,
        } => commands::simulate(
            &common,
            commands::SimArgs {
                scenario: case,
                psi,
                paths,
                seed,
                epsilon,
                out,
                trajectories,
                trajectory_out,
            },
        ),
        Command::Check { psi, common } => commands::check(&common, psi),
        Command::Calibrate {
            data,
            mode,
            bins,
            out,
            common,
        } => commands::calibrate(&common, &data, mode, bins, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::BlowUp) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
