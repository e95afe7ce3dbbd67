//! Multi-hop question answering: the LLM decomposes the question, and each
//! sub-question is answered from the edit memory or from the model itself.

mod llm;
mod prompt;

pub use llm::{HttpLlm, HttpLlmConfig, LlmClient, LlmError, MockRule, MockScript, ScriptedLlm};
pub use prompt::{
    build_prompt, current_question, first_line, parse_step, step_stub, StepParse, ENTITY_PROMPT,
    FINAL_ANSWER_PREFIX, GENERATED_ANSWER_PREFIX, QUESTION_PREFIX, RETRIEVED_FACT_PREFIX,
    SUBQUESTION_PREFIX,
};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::Encoder;
use crate::fact_store::EditMemory;
use crate::retrieve::{check_fingerprint, retrieve_top1, RetrievalResult, RetrieveError, DEFAULT_THRESHOLD};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid orchestrator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Inject a retrieved edit only when its similarity clears the threshold.
    Clever,
    /// Always show the retrieved edit and let the model resolve contradictions.
    Mello,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Clever => "clever",
            Mode::Mello => "mello",
        })
    }
}

/// In-context demonstrations plus the line that signals an accepted
/// contradiction in mello mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSet {
    pub demos: Vec<String>,
    pub contradiction_marker: String,
}

impl DemoSet {
    pub fn builtin(mode: Mode) -> Self {
        let raw = match mode {
            Mode::Clever => include_str!("../../fixtures/demos/clever.json"),
            Mode::Mello => include_str!("../../fixtures/demos/mello.json"),
        };
        serde_json::from_str(raw).expect("bundled demo fixture is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| OrchestratorError::InvalidConfig(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrchestratorConfig {
    pub mode: Mode,
    pub max_hops: usize,
    pub threshold: f64,
    pub demos: Vec<String>,
    pub contradiction_marker: String,
    pub question_language: String,
    pub stop_sequences: Vec<String>,
}

impl OrchestratorConfig {
    pub fn new(mode: Mode) -> Self {
        let DemoSet {
            demos,
            contradiction_marker,
        } = DemoSet::builtin(mode);
        Self {
            mode,
            max_hops: 5,
            threshold: DEFAULT_THRESHOLD,
            demos,
            contradiction_marker,
            question_language: "en".into(),
            stop_sequences: vec![
                format!("\n{GENERATED_ANSWER_PREFIX}"),
                format!("\n{RETRIEVED_FACT_PREFIX}"),
                "\nAccording to Generated answer".into(),
                format!("\n{QUESTION_PREFIX}"),
            ],
        }
    }

    pub fn with_demos(mut self, set: DemoSet) -> Self {
        self.demos = set.demos;
        self.contradiction_marker = set.contradiction_marker;
        self
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::InvalidConfig(m.to_string()));
        if self.max_hops == 0 {
            return bad("max_hops must be at least 1");
        }
        if self.demos.is_empty() {
            return bad("at least one demonstration is required");
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [-1, 1]");
        }
        if self.mode == Mode::Mello && self.contradiction_marker.trim().is_empty() {
            return bad("mello mode needs a contradiction marker");
        }
        Ok(())
    }
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self::new(Mode::Clever)
    }
}

/// What happened at one hop. A hop cut short by malformed output keeps
/// whatever it had gathered, with an empty `extracted_entity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub hop_index: usize,
    pub subquestion: String,
    pub retrieval: Option<RetrievalResult>,
    pub injected: bool,
    pub generated_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<String>,
    pub extracted_entity: String,
}

impl HopTrace {
    fn started(hop_index: usize, subquestion: String) -> Self {
        Self {
            hop_index,
            subquestion,
            retrieval: None,
            injected: false,
            generated_answer: String::new(),
            resolution: None,
            extracted_entity: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Answered,
    MalformedLlmOutput,
    HopLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHopAnswer {
    pub question: String,
    pub final_answer: Option<String>,
    pub outcome: Outcome,
    pub hops: Vec<HopTrace>,
}

impl MultiHopAnswer {
    pub fn injected_hops(&self) -> usize {
        self.hops.iter().filter(|h| h.injected).count()
    }
}

struct Session<'a> {
    question: &'a str,
    llm: &'a dyn LlmClient,
    config: &'a OrchestratorConfig,
    transcript: String,
}

impl Session<'_> {
    fn prompt(&self, tail: &str) -> String {
        let mut p = build_prompt(&self.config.demos, self.question, &self.transcript);
        p.push_str(tail);
        p
    }

    fn ask(&self, tail: &str) -> Result<String, LlmError> {
        self.llm.complete(&self.prompt(tail), &self.config.stop_sequences)
    }

    fn push_line(&mut self, line: &str) {
        self.transcript.push_str(line);
        self.transcript.push('\n');
    }
}

/// Runs the decompose / retrieve / verify / extract loop until the model gives
/// a final answer, produces unusable output, or `max_hops` hops are done.
pub fn answer_multihop(
    question: &str,
    memory: &EditMemory,
    encoder: &dyn Encoder,
    llm: &dyn LlmClient,
    config: &OrchestratorConfig,
) -> Result<MultiHopAnswer, OrchestratorError> {
    config.validate()?;
    check_fingerprint(memory, encoder)?;
    let mut s = Session {
        question,
        llm,
        config,
        transcript: String::new(),
    };
    let mut hops: Vec<HopTrace> = Vec::new();
    let finish = |final_answer, outcome, hops| MultiHopAnswer {
        question: question.to_string(),
        final_answer,
        outcome,
        hops,
    };

    loop {
        let stub = step_stub(&s.transcript);
        let output = s.ask("")?;
        let subquestion = match parse_step(&format!("{stub}{output}")) {
            StepParse::FinalAnswer(answer) => return Ok(finish(Some(answer), Outcome::Answered, hops)),
            StepParse::Subquestion(sq) => sq,
            StepParse::Entity(_) | StepParse::Malformed(_) => {
                hops.push(HopTrace::started(hops.len() + 1, String::new()));
                return Ok(finish(None, Outcome::MalformedLlmOutput, hops));
            }
        };
        if hops.len() == config.max_hops {
            return Ok(finish(None, Outcome::HopLimit, hops));
        }
        let mut hop = HopTrace::started(hops.len() + 1, subquestion.clone());
        s.push_line(&format!("{SUBQUESTION_PREFIX} {subquestion}"));
        hop.retrieval = retrieve_top1(&subquestion, memory, encoder, config.threshold)?;
        tracing::debug!(hop = hop.hop_index, subquestion = %subquestion, score = ?hop.retrieval.as_ref().map(|r| r.score), "retrieved");

        let verified = hop.retrieval.as_ref().filter(|r| r.verified);
        match (config.mode, verified) {
            (Mode::Clever, Some(r)) => {
                hop.generated_answer = r.edit.statement().to_string();
                hop.injected = true;
            }
            _ => hop.generated_answer = first_line(&s.ask(GENERATED_ANSWER_PREFIX)?),
        }
        if hop.generated_answer.is_empty() {
            hops.push(hop);
            return Ok(finish(None, Outcome::MalformedLlmOutput, hops));
        }
        s.push_line(&format!("{GENERATED_ANSWER_PREFIX} {}", hop.generated_answer));

        if config.mode == Mode::Mello {
            if let Some(r) = &hop.retrieval {
                s.push_line(&format!("{RETRIEVED_FACT_PREFIX} {}", r.edit.statement()));
                let resolution = first_line(&s.ask("")?);
                hop.injected = resolution.contains(&config.contradiction_marker);
                s.push_line(&resolution);
                hop.resolution = Some(resolution);
            }
        }

        let output = s.ask(ENTITY_PROMPT)?;
        let first = output.lines().next().unwrap_or("");
        match parse_step(&format!("{ENTITY_PROMPT}{first}")) {
            StepParse::Entity(entity) => {
                s.push_line(&format!("{ENTITY_PROMPT} {entity}"));
                hop.extracted_entity = entity;
                hops.push(hop);
            }
            _ => {
                hops.push(hop);
                return Ok(finish(None, Outcome::MalformedLlmOutput, hops));
            }
        }
    }
}
