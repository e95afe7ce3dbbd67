//! `build-memory`: embed edit statements into a memory file.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use polyedit_core::eval::load_dataset;
use polyedit_core::fact_store::{build_memory, read_edits_jsonl};

use super::{load_templates, open_encoder};
use crate::config::{require_file, usage, RunConfig};

#[derive(Debug, Args)]
pub struct BuildMemoryArgs {
    #[arg(long)]
    pub templates: PathBuf,
    /// Edit files (JSONL); may be repeated.
    #[arg(long)]
    pub edits: Vec<PathBuf>,
    /// Dataset whose instance edits are added after the edit files.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Built-in encoder checkpoint; overrides `[encoder]`.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &BuildMemoryArgs, config: &RunConfig) -> anyhow::Result<()> {
    if args.edits.is_empty() && args.dataset.is_none() {
        return Err(usage("pass at least one --edits file or a --dataset"));
    }
    for path in &args.edits {
        require_file(path, "edit file")?;
    }
    if let Some(path) = &args.dataset {
        require_file(path, "dataset")?;
    }
    let templates = load_templates(&args.templates)?;
    let encoder = open_encoder(&config.encoder, args.encoder.as_ref())?;

    let mut edits = Vec::new();
    for path in &args.edits {
        edits.extend(read_edits_jsonl(path, &templates).with_context(|| format!("reading {}", path.display()))?);
    }
    if let Some(path) = &args.dataset {
        let instances = load_dataset(path, &templates)?;
        edits.extend(instances.into_iter().flat_map(|i| i.edits));
    }
    let memory = build_memory(edits, encoder.as_ref())?;
    memory.save(&args.out)?;
    super::emit(&format!("{} edits, encoder {}\n", memory.len(), memory.encoder_fingerprint()))?;
    Ok(())
}
