//! `ledgerdedup` command-line front end.
//!
//! Exit status is 0 when everything checked passed, 1 when a run completed
//! but an assertion failed, and 2 on usage, input or I/O errors. The last
//! line on stdout is always a one-line summary.

#![allow(clippy::result_large_err)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ledgerdedup::money::Money;

#[derive(Debug, Parser)]
#[command(name = "ledgerdedup", version, about = "Dedup storage market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extra-fee interval for a dedup rate.
    Bounds(BoundsArgs),
    /// Run fairness scenario scripts.
    Scenario(ScenarioArgs),
    /// Utility surfaces for a single provider.
    Experiment1(Experiment1Args),
    /// Per-provider utilities over a popularity dataset.
    Experiment2(Experiment2Args),
    /// Write a synthetic popularity dataset.
    GenDataset(GenDatasetArgs),
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    sf: Money,
    #[arg(long)]
    sc: Money,
    /// Number of dedup users.
    #[arg(long)]
    n: u64,
    /// Include interaction costs: user,csp,deploy.
    #[arg(long, value_delimiter = ',')]
    costs: Option<Vec<Money>>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Script file or directory of `.toml` scripts.
    #[arg(long, conflicts_with = "bundled", required_unless_present = "bundled")]
    script: Option<PathBuf>,
    /// Run the suite shipped with the library.
    #[arg(long)]
    bundled: bool,
    /// Recorded JSONL trace to compare against; needs a single script.
    #[arg(long, requires = "script")]
    replay: Option<PathBuf>,
    /// Write each run's trace as `<name>.jsonl` here.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "LEDGERDEDUP_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Experiment1Args {
    #[command(flatten)]
    io: OutArgs,
    /// Compare with the bundled plotted values and fail outside tolerance.
    #[arg(long)]
    check_golden: bool,
}

#[derive(Debug, Args)]
struct Experiment2Args {
    #[command(flatten)]
    io: OutArgs,
    /// popcon `by_inst` listing.
    #[arg(long, requires = "sizes")]
    dataset: Option<PathBuf>,
    /// Two-column `package bytes` table.
    #[arg(long, requires = "dataset")]
    sizes: Option<PathBuf>,
    #[arg(long)]
    csps: Option<usize>,
    /// Fail unless u2 >= u1 >= u0 for every provider.
    #[arg(long)]
    check_ordering: bool,
}

#[derive(Debug, Args)]
struct GenDatasetArgs {
    #[arg(long, default_value_t = 403)]
    packages: usize,
    #[arg(long, default_value_t = 270_738)]
    requests: u64,
    #[arg(long, default_value_t = 2020)]
    seed: u64,
    #[arg(long, env = "LEDGERDEDUP_OUT_DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bounds(a) => commands::bounds(a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Experiment1(a) => commands::experiment1(a),
        Command::Experiment2(a) => commands::experiment2(a),
        Command::GenDataset(a) => commands::gen_dataset(a),
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            let flat: Vec<String> = e.to_string().split_whitespace().map(str::to_string).collect();
            println!("error: {}", flat.join(" "));
            ExitCode::from(2)
        }
    }
}
