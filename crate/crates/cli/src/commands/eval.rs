//! `eval`: batch evaluation of a dataset under one or more memory policies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use polyedit_core::eval::{format_table, load_dataset, run_eval, write_traces_jsonl, EvalReport, MemoryPolicy};
use polyedit_core::fact_store::read_edits_jsonl;
use polyedit_core::orchestrator::Mode;
use serde::Serialize;

use super::{emit, load_templates, open_encoder, open_llm, orchestrator_config, sha256_file, write_json};
use crate::config::{require_file, RunConfig};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub templates: PathBuf,
    /// Edits added to memory on top of the instance edits (JSONL); may be repeated.
    #[arg(long)]
    pub extra_edits: Vec<PathBuf>,
    /// Built-in encoder checkpoint; overrides `[encoder]`.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Mock transcript; overrides `[llm]`.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Memory policies, e.g. `100,all`.
    #[arg(long, value_delimiter = ',')]
    pub memory: Vec<MemoryPolicy>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Trace JSONL to write; with several policies the label is inserted before the extension.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Clever,
    Mello,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Clever => Mode::Clever,
            ModeArg::Mello => Mode::Mello,
        }
    }
}

#[derive(Serialize)]
struct ReportFile {
    inputs: BTreeMap<String, String>,
    encoder_fingerprint: String,
    mode: Mode,
    threshold: f64,
    max_hops: usize,
    seed: u64,
    reports: Vec<EvalReport>,
}

fn traces_path(base: &Path, label: &str, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("traces");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("jsonl");
    base.with_file_name(format!("{stem}.{label}.{ext}"))
}

pub fn run(args: &EvalArgs, config: &RunConfig) -> anyhow::Result<()> {
    require_file(&args.dataset, "dataset")?;
    for path in &args.extra_edits {
        require_file(path, "edit file")?;
    }
    let mut section = config.orchestrator.clone();
    section.max_hops = args.max_hops.unwrap_or(section.max_hops);
    let orchestrator = orchestrator_config(&section, args.mode.map(Mode::from), args.threshold)?;
    let policies = if args.memory.is_empty() {
        config.eval.memory.clone()
    } else {
        args.memory.clone()
    };
    let seed = args.seed.unwrap_or(config.eval.seed);
    let templates = load_templates(&args.templates)?;
    let encoder = open_encoder(&config.encoder, args.encoder.as_ref())?;
    let llm = open_llm(&config.llm, args.mock.as_ref())?;

    let instances = load_dataset(&args.dataset, &templates)?;
    let mut extra = Vec::new();
    for path in &args.extra_edits {
        extra.extend(read_edits_jsonl(path, &templates).with_context(|| format!("reading {}", path.display()))?);
    }

    let mut inputs = BTreeMap::new();
    inputs.insert("dataset".to_string(), sha256_file(&args.dataset)?);
    inputs.insert("templates".to_string(), sha256_file(&args.templates)?);
    for (i, path) in args.extra_edits.iter().enumerate() {
        inputs.insert(format!("extra_edits[{i}]"), sha256_file(path)?);
    }
    if let Some(path) = args.mock.as_ref().or(config.llm.mock.as_ref()) {
        inputs.insert("mock".to_string(), sha256_file(path)?);
    }

    let mut reports = Vec::new();
    for &policy in &policies {
        tracing::info!(memory = %policy.label(), mode = %orchestrator.mode, "evaluating");
        let run = run_eval(&instances, &extra, policy, encoder.as_ref(), llm.as_ref(), &orchestrator, seed)?;
        if let Some(base) = &args.traces {
            write_traces_jsonl(traces_path(base, &policy.label(), policies.len() > 1), &run.traces)?;
        }
        emit(&format_table(&run.report))?;
        reports.push(run.report);
    }
    if let Some(path) = &args.report {
        let file = ReportFile {
            inputs,
            encoder_fingerprint: encoder.fingerprint().to_string(),
            mode: orchestrator.mode,
            threshold: orchestrator.threshold,
            max_hops: orchestrator.max_hops,
            seed,
            reports,
        };
        write_json(path, &file)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_paths() {
        let base = Path::new("out/traces.jsonl");
        assert_eq!(traces_path(base, "all", false), base);
        assert_eq!(traces_path(base, "100", true), Path::new("out/traces.100.jsonl"));
    }
}
