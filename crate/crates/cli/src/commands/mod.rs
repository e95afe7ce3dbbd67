//! Subcommand implementations and the loaders they share.

pub mod answer;
pub mod eval;
pub mod gen_synth;
pub mod init_encoder;
pub mod memory;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;
use polyedit_core::encoder::checkpoint::Checkpoint;
use polyedit_core::encoder::{BuiltinEncoder, Encoder, RemoteEncoder};
use polyedit_core::fact_store::TemplateTable;
use polyedit_core::orchestrator::{
    DemoSet, HttpLlm, LlmClient, Mode, MockScript, OrchestratorConfig, ScriptedLlm,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{require_file, usage, EncoderSection, LlmSection, OrchestratorSection};

/// Flag overrides for the encoder section.
pub fn open_encoder(section: &EncoderSection, checkpoint: Option<&PathBuf>) -> anyhow::Result<Box<dyn Encoder>> {
    let checkpoint = checkpoint.or(section.checkpoint.as_ref());
    match (checkpoint, &section.remote) {
        (Some(path), _) => {
            require_file(path, "encoder checkpoint")?;
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            Ok(Box::new(BuiltinEncoder::new(ckpt.params)))
        }
        (None, Some(remote)) => Ok(Box::new(RemoteEncoder::new(remote.clone())?)),
        (None, None) => Err(usage("no encoder: pass --encoder or set [encoder] in the config")),
    }
}

pub fn open_llm(section: &LlmSection, mock: Option<&PathBuf>) -> anyhow::Result<Box<dyn LlmClient>> {
    let mock = mock.or(section.mock.as_ref());
    match (mock, &section.http) {
        (Some(path), _) => {
            require_file(path, "mock transcript")?;
            let script = MockScript::load(path).with_context(|| format!("loading {}", path.display()))?;
            Ok(Box::new(ScriptedLlm::new(script)))
        }
        (None, Some(http)) => Ok(Box::new(HttpLlm::new(http.clone())?)),
        (None, None) => Err(usage("no LLM: pass --mock or set [llm] in the config")),
    }
}

pub fn orchestrator_config(
    section: &OrchestratorSection,
    mode: Option<Mode>,
    threshold: Option<f64>,
) -> anyhow::Result<OrchestratorConfig> {
    let mode = mode.unwrap_or(section.mode);
    let mut config = OrchestratorConfig::new(mode);
    if let Some(path) = &section.demos {
        require_file(path, "demo file")?;
        config = config.with_demos(DemoSet::load(path)?);
    }
    config.max_hops = section.max_hops;
    config.threshold = threshold.unwrap_or(section.threshold);
    config.question_language = section.question_language.clone();
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

pub fn load_templates(path: &Path) -> anyhow::Result<TemplateTable> {
    require_file(path, "template file")?;
    TemplateTable::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}
