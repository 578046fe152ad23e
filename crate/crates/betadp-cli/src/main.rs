//! `betadp` — edge-private release of simple undirected graphs and inference
//! for node-level degree-heterogeneity parameters from the released data.
//!
//! Subcommands:
//!   release   jitter a graph under a noise schedule and write the result
//!   estimate  moment-based parameter estimates (+ variances, + MLE baselines)
//!   infer     simultaneous confidence regions and tests on released data
//!   simulate  synthetic-data error and coverage studies
//!   mle       logistic-model fit on raw or released degrees
//!
//! Every run writes its artifacts into `--out DIR` together with
//! `manifest.json` (resolved config, seed, SHA-256 of each data artifact) and
//! `metrics.json` (timings/memory; excluded from the manifest on purpose —
//! data artifacts are byte-stable across thread counts, metrics are not).

mod commands;
mod common;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "betadp", version, about = "Edge-private graph release and inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a pair-level jitter to an edge list and write the released graph.
    Release(commands::release::ReleaseArgs),
    /// Estimate node parameters from a released graph by the moment method.
    Estimate(commands::estimate::EstimateArgs),
    /// Simultaneous confidence regions and hypothesis tests.
    Infer(commands::infer::InferArgs),
    /// Synthetic-data studies: estimation error or region coverage.
    Simulate(commands::simulate::SimulateArgs),
    /// Maximum-likelihood fit on raw degrees or noise-corrected degrees.
    Mle(commands::mle::MleArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Release(args) => commands::release::run(args),
        Command::Estimate(args) => commands::estimate::run(args),
        Command::Infer(args) => commands::infer::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Mle(args) => commands::mle::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
