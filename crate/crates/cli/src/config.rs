//! Run configuration file. Every section is optional; command-line flags
//! override the scalars they name.

use std::path::{Path, PathBuf};

use polyedit_core::encoder::{RemoteEncoderConfig, DEFAULT_DIM, DEFAULT_VOCAB_SIZE};
use polyedit_core::eval::MemoryPolicy;
use polyedit_core::orchestrator::{HttpLlmConfig, Mode};
use polyedit_core::synth::{HopMix, LanguagePolicy};
use polyedit_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bad flags, bad config or missing inputs; maps to exit code 2.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSection,
    pub init: InitSection,
    pub train: TrainConfig,
    pub encoder: EncoderSection,
    pub llm: LlmSection,
    pub orchestrator: OrchestratorSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub seed: u64,
    pub entities: usize,
    pub chains: usize,
    /// Number of pseudo-languages, tagged `xx1`, `xx2`, ...
    pub languages: usize,
    pub hop_mix: HopMix,
    pub distractor_rate: f64,
    pub policy: LanguagePolicy,
    /// Render edits in English only (monolingual control corpus).
    pub english_edits: bool,
    pub edit_all_hops: bool,
    /// Size of the separate world that retriever training data is drawn from.
    pub train_entities: usize,
    pub train_edits: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            seed: 0,
            entities: 1000,
            chains: 500,
            languages: 2,
            hop_mix: HopMix::default(),
            distractor_rate: 1.0,
            policy: LanguagePolicy::RoundRobin,
            english_edits: false,
            edit_all_hops: false,
            train_entities: 400,
            train_edits: 5000,
        }
    }
}

/// Shape and seed of a freshly initialized built-in encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for InitSection {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            vocab_size: DEFAULT_VOCAB_SIZE,
            seed: 0,
        }
    }
}

/// Exactly one of a built-in checkpoint or a remote service.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub checkpoint: Option<PathBuf>,
    pub remote: Option<RemoteEncoderConfig>,
}

/// Exactly one of a mock transcript or an HTTP endpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub mock: Option<PathBuf>,
    pub http: Option<HttpLlmConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorSection {
    pub mode: Mode,
    pub max_hops: usize,
    pub threshold: f64,
    /// Demonstration file replacing the bundled demos for the mode.
    pub demos: Option<PathBuf>,
    pub question_language: String,
}

impl Default for OrchestratorSection {
    fn default() -> Self {
        Self {
            mode: Mode::Clever,
            max_hops: 5,
            threshold: 0.7,
            demos: None,
            question_language: "en".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub memory: Vec<MemoryPolicy>,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            memory: vec![MemoryPolicy::All],
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses `path`, resolving relative paths inside it against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.encoder.checkpoint,
            &mut config.llm.mock,
            &mut config.orchestrator.demos,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Fails with a usage error unless `path` exists.
pub fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let text = r#"
            [synth]
            chains = 9
            policy = "fixed:xx1"
            hop_mix = { two = 1.0, three = 0.0, four = 0.0 }

            [init]
            dim = 32

            [train]
            epochs = 3
            learning_rate = 0.001
            loss_weights = { sd = 1.0, clec = 0.0, bce = 1.0 }

            [encoder]
            checkpoint = "enc.bin"

            [llm.http]
            endpoint = "http://localhost:1/v1/chat/completions"
            model = "m"

            [orchestrator]
            mode = "mello"
            threshold = 0.5

            [eval]
            memory = ["100", "all"]
        "#;
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.synth.chains, 9);
        assert_eq!(config.synth.policy, LanguagePolicy::Fixed("xx1".into()));
        assert_eq!(config.init.dim, 32);
        assert_eq!(config.train.epochs, 3);
        assert_eq!(config.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(config.orchestrator.mode, Mode::Mello);
        assert_eq!(config.eval.memory, vec![MemoryPolicy::Sampled(100), MemoryPolicy::All]);
        assert!(config.llm.http.is_some());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[train]\nlr = 0.1", "[orchestrator]\nmode = \"other\""] {
            assert!(toml::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[llm]\nmock = \"mock.json\"\n").unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.llm.mock.unwrap(), dir.path().join("mock.json"));
        let err = RunConfig::load(&dir.path().join("missing.toml")).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
