//! `citemine`: crawl citation neighborhoods, mine hard negatives, evaluate
//! rankings and benchmark exact retrieval.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error. Failures are printed to stderr as one JSON object
//! `{"stage", "kind", "message"}`.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{AblateArgs, BenchArgs, CrawlArgs, EvalArgs, MineArgs, PipelineConfig, StatsArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "citemine", version, about = "Citation-aware hard-negative mining pipeline")]
struct Cli {
    /// TOML file with optional [crawl], [mine], [eval], [bench], [stats] and
    /// [ablate] sections; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages [default: 0 = one per CPU]
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch 1-hop and 2-hop citation neighborhoods from PubMed
    Crawl(CrawlArgs),
    /// Mine hard-negative triplets from a corpus
    Mine(MineArgs),
    /// Score TREC runs (nDCG@K, Success@K) or triplet accuracy
    Eval(EvalArgs),
    /// Exact flat-index latency benchmark
    Bench(BenchArgs),
    /// Summarize a corpus and/or triplet file
    Stats(StatsArgs),
    /// Mine under each traversal-count and path-length setting
    Ablate(AblateArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let workers = cli.workers.or(file.workers).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::runtime("cli", "threads", e))?;

    match cli.command {
        Command::Crawl(a) => commands::crawl(a.overlay(file.crawl)),
        Command::Mine(a) => commands::mine(a.overlay(file.mine)),
        Command::Eval(a) => commands::eval(a.overlay(file.eval)),
        Command::Bench(a) => commands::bench_cmd(a.overlay(file.bench)),
        Command::Stats(a) => commands::stats(a.overlay(file.stats)),
        Command::Ablate(a) => commands::ablate(a.overlay(file.ablate)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first).to_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
