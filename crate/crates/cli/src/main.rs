//! Command-line front end for the entailment QA engine.
//!
//! Every path (corpus, questions, model, outputs) comes from a JSON run
//! configuration; command-line flags override individual knobs on top of
//! it. Subcommands: `index`, `train`, `predict`, `eval`, `ablate`.

mod commands;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use entail::config::{Overrides, RunConfig};
use entail::question::TaskScheme;
use entail::structure::Block;
use entail::{Error, Result};

/// Multiple-choice question answering over a textbook curriculum, scored by
/// latent answer-entailing structures.
#[derive(Parser)]
#[command(name = "entail", version, about)]
struct Cli {
    /// JSON run configuration (or set ENTAIL_CONFIG).
    #[arg(long, global = true, env = "ENTAIL_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the seed behind every randomized choice.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the inference beam width.
    #[arg(long, global = true)]
    beam: Option<usize>,

    /// Multi-task scheme: none, qword, or qtype.
    #[arg(long, global = true, value_name = "SCHEME", value_parser = TaskScheme::from_str)]
    task_scheme: Option<TaskScheme>,

    /// Keep the plain argmax on negation questions instead of flipping.
    #[arg(long, global = true)]
    no_negation: bool,

    /// Whether review questions join the training set (true/false).
    #[arg(long, global = true, value_name = "BOOL")]
    joint_review: Option<bool>,

    /// Comma-separated feature blocks to force to zero (z1,z2,z3,z4,z5,k).
    #[arg(long, global = true, value_name = "BLOCKS", value_delimiter = ',', value_parser = Block::from_str)]
    ablate: Option<Vec<Block>>,

    /// Cap the worker-thread pool (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or refresh the cached retrieval indices.
    Index,
    /// Train a model; writes the model file and the objective trace.
    Train,
    /// Score questions and write one JSON line per prediction.
    Predict,
    /// Measure accuracy against gold answers; prints an aligned table.
    Eval,
    /// Drop feature blocks one at a time and compare against the full model.
    Ablate {
        /// Retrain under each ablation instead of masking trained weights.
        #[arg(long)]
        retrain: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("no configuration: pass --config FILE or set ENTAIL_CONFIG".into()))?;
    let mut config = RunConfig::load(path)?;
    config.apply(&overrides_from(&cli));
    config.validate()?;
    match cli.command {
        Command::Index => commands::index(&config),
        Command::Train => commands::train(&config),
        Command::Predict => commands::predict(&config),
        Command::Eval => commands::eval(&config),
        Command::Ablate { retrain } => commands::ablate(&config, retrain),
    }
}

fn overrides_from(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        beam: cli.beam,
        task_scheme: cli.task_scheme,
        negation: cli.no_negation.then_some(false),
        joint_review: cli.joint_review,
        ablate: cli.ablate.as_ref().map(|blocks| blocks.iter().copied().collect::<BTreeSet<_>>()),
    }
}
