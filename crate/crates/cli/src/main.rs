mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use socialformer::partition::PartitionMode;
use socialformer::Error;

use crate::commands::Context;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "socialformer",
    version,
    about = "Sparse token graphs and circle transformers for document ranking"
)]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pattern heatmaps, scaled probabilities and a sampled graph for one pair.
    BuildGraph {
        #[arg(long)]
        doc: String,
        #[arg(long)]
        query: String,
        /// Also write pattern CSVs, the adjacency heatmap and graph stats.
        #[arg(long)]
        all: bool,
    },
    /// Friend-circle partition of an edge list.
    Partition {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
        #[arg(long)]
        mode: Option<PartitionMode>,
    },
    /// Subgraph sizes across sparsity levels, for both partition modes.
    SweepSparsity {
        /// Comma-separated sparsity levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Sweep a corpus document instead of the synthetic one.
        #[arg(long, requires = "query")]
        doc: Option<String>,
        #[arg(long, requires = "doc")]
        query: Option<String>,
    },
    /// Listwise training; writes a checkpoint and the loss history.
    Train,
    /// Scores candidates with a checkpoint and writes a TREC run.
    Rerank {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// MRR and nDCG of a run against the configured qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
    },
    /// Analytic against finite-difference gradients on small instances.
    GradCheck {
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Writes a seeded synthetic collection.
    GenFixtures,
    /// Prints the resolved configuration and parameter count.
    Describe,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::UnknownId { .. } | Error::Parse { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let ctx = Context {
        config,
        out: cli.out,
    };
    match cli.command {
        Command::BuildGraph { doc, query, all } => commands::build_graph(&ctx, &doc, &query, all)?,
        Command::Partition { graph, k, mode } => {
            commands::partition_graph(&ctx, &graph, k.map(|k| k as usize), mode)?
        }
        Command::SweepSparsity { levels, doc, query } => {
            commands::sweep(&ctx, levels, doc.zip(query))?
        }
        Command::Train => commands::train_model(&ctx)?,
        Command::Rerank { checkpoint } => commands::rerank(&ctx, checkpoint)?,
        Command::Eval { run } => commands::eval(&ctx, &run)?,
        Command::GradCheck { seeds } => return commands::grad_check_seeds(&ctx, seeds),
        Command::GenFixtures => commands::gen_fixtures(&ctx)?,
        Command::Describe => commands::describe(&ctx)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
