//! `polyedit`: synthetic data generation, retriever training, memory
//! building, single-question answering and batch evaluation.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::filter::LevelFilter;

use commands::answer::AnswerArgs;
use commands::eval::EvalArgs;
use commands::gen_synth::GenSynthArgs;
use commands::init_encoder::InitEncoderArgs;
use commands::memory::BuildMemoryArgs;
use commands::train::TrainArgs;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "polyedit", version, about = "Cross-lingual multi-hop knowledge editing")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus: world, dataset, edits, training data and mock transcript.
    GenSynth(GenSynthArgs),
    /// Write an untrained encoder checkpoint.
    InitEncoder(InitEncoderArgs),
    /// Train the built-in encoder.
    Train(TrainArgs),
    /// Embed edits into a memory file.
    BuildMemory(BuildMemoryArgs),
    /// Evaluate a dataset and report Acc / Hop-Acc.
    Eval(EvalArgs),
    /// Answer one question and print the hop trace.
    Answer(AnswerArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = RunConfig::load_or_default(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(config::usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match &cli.command {
        Command::GenSynth(args) => commands::gen_synth::run(args, &config),
        Command::InitEncoder(args) => commands::init_encoder::run(args, &config),
        Command::Train(args) => commands::train::run(args, &config),
        Command::BuildMemory(args) => commands::memory::run(args, &config),
        Command::Eval(args) => commands::eval::run(args, &config),
        Command::Answer(args) => commands::answer::run(args, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        2 => LevelFilter::DEBUG,
        _ => LevelFilter::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}
