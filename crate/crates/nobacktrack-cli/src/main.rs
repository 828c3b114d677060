//! Command-line surface of the toolkit: inspect chains, lift them, compare
//! asymptotic variances, run the block harnesses, and rebuild the reference
//! tables.
//!
//! Exit codes: 0 all checks in the invoked report pass, 1 a check failed,
//! 2 usage or I/O error. All randomness flows from `--seed`; identical
//! invocations produce byte-identical output files.

mod commands;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "nobacktrack",
    version,
    about = "Finite Markov chains, no-backtracking lifts, and asymptotic variance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelChoice {
    /// Modified Gibbs update that avoids the current value.
    Liu,
    /// Plain Gibbs update; the lift replicates the base chain.
    Identity,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a chain file and report stochasticity, irreducibility, the
    /// stationary distribution, and reversibility.
    Analyze {
        /// Chain JSON file.
        chain: PathBuf,
        /// Tolerance override for the validation checks.
        #[arg(long)]
        tol: Option<f64>,
        /// Write the verdicts as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lift a reversible chain to pair states, with the chosen update
    /// kernel, writing the expanded chain and its pair-provenance map.
    Lift {
        /// Chain JSON file (must be reversible).
        chain: PathBuf,
        #[arg(long, value_enum, default_value_t = KernelChoice::Liu)]
        kernel: KernelChoice,
        /// Output path for the expanded chain (default: `<input>.lifted.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact and empirical asymptotic variance of the base chain and its
    /// no-backtracking modification, side by side.
    Compare {
        /// Chain JSON file (must be reversible).
        chain: PathBuf,
        /// Function of state as comma-separated values (default: the `f`
        /// field of the chain file, or the state index).
        #[arg(long, value_delimiter = ',')]
        f: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Format of the report written to --out.
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
        /// Write the paired report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delta-coupled simulation of an elementary dominated pair: block
    /// tables, per-type statistics, and the stratification checks.
    Blocks {
        /// `counterexample` or a pair JSON file
        /// `{"old": <chain>, "new": <chain>, "a": <label>, "b": <label>}`.
        pair: String,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output stem; writes `<out>.old.csv`, `<out>.new.csv`,
        /// `<out>.json`.
        #[arg(long, default_value = "blocks")]
        out: PathBuf,
    },
    /// Write a built-in example chain to a chain JSON file.
    Export {
        /// One of: `line:<N>`, `rectangle:<N>x<M>`,
        /// `counterexample-old[:<delta>]`, `counterexample-new[:<delta>]`,
        /// `peskun-t`, `peskun-middle`, `peskun-t-prime`,
        /// `random:<states>:<density>` (seeded by --seed).
        example: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (default: `<example>.json` with `:` replaced by `_`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a reference table with pass/fail verdicts.
    Reproduce {
        /// One of: line, rectangle, counterexample, peskun-matrices,
        /// lemma1, lemma2.
        target: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the report files.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze { chain, tol, out } => commands::analyze(&chain, tol, out.as_deref()),
        Command::Lift { chain, kernel, out } => commands::lift(&chain, kernel, out.as_deref()),
        Command::Compare {
            chain,
            f,
            n,
            reps,
            seed,
            format,
            out,
        } => commands::compare(&chain, f, n, reps, seed, format, out.as_deref()),
        Command::Blocks { pair, n, seed, out } => commands::blocks(&pair, n, seed, &out),
        Command::Export { example, seed, out } => commands::export(&example, seed, out.as_deref()),
        Command::Reproduce { target, seed, out } => reproduce::run(&target, seed, &out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
