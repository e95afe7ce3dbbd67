//! `answer`: one multi-hop question against a memory file.

use std::path::PathBuf;

use clap::Args;
use polyedit_core::fact_store::EditMemory;
use polyedit_core::orchestrator::{answer_multihop, build_prompt, Mode};

use super::eval::ModeArg;
use super::{emit, load_templates, open_encoder, open_llm, orchestrator_config};
use crate::config::{require_file, RunConfig};

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    pub question: String,
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Built-in encoder checkpoint; overrides `[encoder]`.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Mock transcript; overrides `[llm]`.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Print the first prompt and stop without contacting the LLM.
    #[arg(long)]
    pub dry_run: bool,
}

pub fn run(args: &AnswerArgs, config: &RunConfig) -> anyhow::Result<()> {
    let orchestrator = orchestrator_config(&config.orchestrator, args.mode.map(Mode::from), args.threshold)?;
    if args.dry_run {
        return emit(&format!("{}\n", build_prompt(&orchestrator.demos, &args.question, "")));
    }
    let (Some(memory_path), Some(templates_path)) = (&args.memory, &args.templates) else {
        return Err(crate::config::usage("--memory and --templates are required unless --dry-run is set"));
    };
    require_file(memory_path, "memory file")?;
    let templates = load_templates(templates_path)?;
    let memory = EditMemory::load(memory_path, &templates)?;
    let encoder = open_encoder(&config.encoder, args.encoder.as_ref())?;
    let llm = open_llm(&config.llm, args.mock.as_ref())?;
    let answer = answer_multihop(&args.question, &memory, encoder.as_ref(), llm.as_ref(), &orchestrator)?;
    emit(&format!("{}\n", serde_json::to_string_pretty(&answer)?))?;
    Ok(())
}
