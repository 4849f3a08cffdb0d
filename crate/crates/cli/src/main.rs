use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod config;
mod error;
mod manifest;
mod run;
mod stages;

use manifest::RunManifest;
use stages::{EvaluateArgs, ExtractArgs, FillersArgs, Globals, NonceArgs, ReportArgs, TrainArgs};

/// Build long-distance number-agreement test sets from dependency treebanks
/// and score language models on them.
#[derive(Parser, Debug)]
#[command(name = "agreebench", version)]
struct Cli {
    /// Add Number to English finite present-tense verbs and auxiliaries before use.
    #[arg(long, global = true)]
    enrich_en_verbs: bool,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mine constructions and write the original test set.
    Extract(ExtractArgs),
    /// Generate nonce variants of original items.
    Nonce(NonceArgs),
    /// Generate filler items for a human experiment.
    Fillers(FillersArgs),
    /// Train a Kneser-Ney n-gram model.
    TrainNgram(TrainArgs),
    /// Score test items with one or more language models.
    Evaluate(EvaluateArgs),
    /// Aggregate record files into tables and plot data.
    Report(ReportArgs),
    /// Run every stage from a config file.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config file.
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
}

fn record_stage(out: &std::path::Path, record: manifest::StageRecord) -> Result<()> {
    let mut m = RunManifest::load_or_new(out)?;
    m.upsert(record);
    m.save(out)
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::usage("`--threads` must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = Globals { enrich_en_verbs: cli.enrich_en_verbs };
    match cli.command {
        Command::Extract(a) => record_stage(&a.out, stages::extract(&a, g)?),
        Command::Nonce(a) => record_stage(&a.out, stages::nonce(&a, g)?),
        Command::Fillers(a) => record_stage(&a.out, stages::fillers(&a, g)?),
        Command::TrainNgram(a) => record_stage(&a.out, stages::train_ngram(&a, g)?),
        Command::Evaluate(a) => record_stage(&a.out, stages::evaluate_stage(&a, g)?),
        Command::Report(a) => record_stage(&a.out, stages::report(&a, g)?),
        Command::Run(a) => {
            let ov = run::Overrides { out: a.out, seed: a.seed, window: a.window, enrich_en_verbs: g.enrich_en_verbs };
            let out = run::run_pipeline(&a.config, ov)?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            if error::is_usage(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
