mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "rankone", version, about = "Find approximately rank-one matrices in a subspace")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Unset flags fall back to the --config
/// file, then to built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// accuracy parameter ε
    #[arg(long)]
    pub eps: Option<f64>,
    /// SOS relaxation degree
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// structure iterations (solve) or thresholding rounds (rectangle)
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// SDP solver tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// report path for solve/rectangle/check/reduce, file prefix for gen
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with key = value defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// include wall-clock timings (makes the report non-reproducible)
    #[arg(long)]
    pub timing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    PlantedYes,
    RandomNo,
    ComplexPlanted,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance: writes PREFIX.sub (or .csub) and PREFIX.plant (or .cplant)
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        n: usize,
        #[arg(long = "dim")]
        dim_w: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Solve a SUBSPACE, MEASUREMENT or CSUBSPACE file
    Solve {
        input: PathBuf,
        /// eigenvalue threshold for measurement files (default 1 − 1/n)
        #[arg(long)]
        threshold: Option<f64>,
        /// skip the phase gauge for complex inputs
        #[arg(long)]
        no_gauge: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Find an approximately rank-one rectangle of UᵀV
    Rectangle {
        /// FACTORS file for U
        u: PathBuf,
        /// FACTORS file for V (default: U)
        v: Option<PathBuf>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        min_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Lift a CSUBSPACE file to a real SUBSPACE file
    Reduce {
        input: PathBuf,
        /// intersect with the phase gauge
        #[arg(long)]
        gauge: bool,
        /// CPLANT answer to check completeness against
        #[arg(long)]
        answer: Option<PathBuf>,
        /// where to write the lifted SUBSPACE file
        #[arg(long)]
        write: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Verify a candidate (PLANT or CPLANT file) against an instance
    Check {
        input: PathBuf,
        candidate: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, outcome) = match cli.command {
        Command::Gen { kind, n, dim_w, common } => {
            let r = commands::gen(kind, n, dim_w, &common);
            (common, r)
        }
        Command::Solve { input, threshold, no_gauge, common } => {
            let r = commands::solve(&input, threshold, !no_gauge, &common);
            (common, r)
        }
        Command::Rectangle { u, v, k, min_size, common } => {
            let r = commands::rectangle(&u, v.as_deref(), k, min_size, &common);
            (common, r)
        }
        Command::Reduce { input, gauge, answer, write, common } => {
            let r = commands::reduce(&input, gauge, answer.as_deref(), write.as_deref(), &common);
            (common, r)
        }
        Command::Check { input, candidate, threshold, common } => {
            let r = commands::check(&input, &candidate, threshold, &common);
            (common, r)
        }
    };
    report::emit(outcome, &common)
}
