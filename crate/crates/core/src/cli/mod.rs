//! Command-line front end.
//!
//! Subcommands: `simulate`, `fit`, `evaluate`, `accuracy` and `benchmark`.
//! Exit status is 0 on success, 2 for usage and configuration errors, 3 for
//! data errors and 4 for numerical failures.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::fit::MethodTag;
use crate::simlab::rng::DEFAULT_SEED;

pub use commands::{config_hash, run};

#[derive(Debug, Parser)]
#[command(name = "dtrlab", version, about = "Estimate and benchmark dynamic treatment regimes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Case1,
    Case2,
}

/// Data generator: a built-in case or a TOML spec file.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct GeneratorArgs {
    #[arg(long, value_enum)]
    pub case: Option<CaseArg>,
    /// Declarative generator spec (TOML).
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Master seed; defaults to $DTRLAB_SEED, then a fixed constant.
    #[arg(long, env = "DTRLAB_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write it as wide CSV.
    Simulate {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(short = 'n', long, default_value_t = 1000)]
        n: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// Output CSV; standard output when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Fit one estimator to a CSV dataset.
    Fit {
        #[arg(long, value_parser = parse_method)]
        method: MethodTag,
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Read one row per person-stage instead of one per trajectory.
        #[arg(long)]
        long: bool,
        /// Model specification (TOML).
        #[arg(long, value_name = "FILE", conflicts_with = "case")]
        config: Option<PathBuf>,
        /// Use the built-in specification of a benchmark case.
        #[arg(long, value_enum)]
        case: Option<CaseArg>,
        /// Bootstrap replicates for standard errors.
        #[arg(long, value_name = "B")]
        bootstrap: Option<usize>,
        #[command(flatten)]
        seed: SeedArg,
        /// Write the JSON report here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write the fitted regime as JSON here.
        #[arg(long, value_name = "FILE")]
        regime_out: Option<PathBuf>,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo value of a regime under a generator.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        regime: PathBuf,
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Decision accuracy of a regime against the generator's oracle.
    Accuracy {
        #[arg(long, value_name = "FILE")]
        regime: PathBuf,
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Replicated simulation benchmark with summary tables.
    Benchmark {
        #[arg(long, value_enum)]
        suite: CaseArg,
        #[arg(short = 'R', long, default_value_t = 200)]
        replications: usize,
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        /// Comma-separated methods; defaults depend on the suite.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Vec<MethodTag>,
        /// Monte Carlo draws per fitted regime (0 skips values).
        #[arg(long, default_value_t = 0)]
        mc_draws: usize,
        /// Override the suite's model specification (TOML).
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory for the CSV tables and reports.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<MethodTag, String> {
    MethodTag::parse(s).ok_or_else(|| {
        let names: Vec<&str> = MethodTag::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method `{s}`; expected one of: {}", names.join(", "))
    })
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
