//! Evaluation over MQuAKE-style datasets: multi-hop accuracy and hop-wise
//! accuracy, overall and per edit language.

mod dataset;

pub use dataset::{
    dataset_to_string, load_dataset, parse_dataset, save_dataset, AnswerText, GoldHop, InstanceRecord,
    MultiHopInstance, RewriteRecord, SingleHopRecord,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::Encoder;
use crate::fact_store::{build_memory, FactEdit, FactError};
use crate::orchestrator::{answer_multihop, LlmClient, Mode, MultiHopAnswer, OrchestratorConfig, OrchestratorError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("schema error at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid memory policy `{0}` (expected `all` or a positive count)")]
    InvalidPolicy(String),
    #[error("trace line {line}: {source}")]
    Trace { line: usize, source: serde_json::Error },
    #[error("trace refers to unknown instance `{0}`")]
    UnknownInstance(String),
    #[error(transparent)]
    Fact(#[from] FactError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which edits go into memory and which instances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MemoryPolicy {
    /// Sample this many instances with a seeded rng; their edits form the memory
    /// and only they are evaluated.
    Sampled(usize),
    /// Every edit in memory, every instance evaluated.
    All,
}

impl MemoryPolicy {
    pub fn label(&self) -> String {
        match self {
            MemoryPolicy::Sampled(n) => n.to_string(),
            MemoryPolicy::All => "all".into(),
        }
    }
}

impl FromStr for MemoryPolicy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all" => Ok(MemoryPolicy::All),
            n => n
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .map(MemoryPolicy::Sampled)
                .ok_or_else(|| EvalError::InvalidPolicy(s.to_string())),
        }
    }
}

impl TryFrom<String> for MemoryPolicy {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MemoryPolicy> for String {
    fn from(p: MemoryPolicy) -> Self {
        p.label()
    }
}

/// Trimmed and case-folded.
pub fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

pub fn answer_matches(predicted: &str, gold: &str, aliases: &[String]) -> bool {
    let p = normalize_answer(predicted);
    std::iter::once(gold)
        .chain(aliases.iter().map(String::as_str))
        .any(|g| normalize_answer(g) == p)
}

/// One orchestration, as persisted in the traces file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub instance_id: String,
    pub question_index: usize,
    pub answer: MultiHopAnswer,
}

pub fn run_is_correct(answer: &MultiHopAnswer, instance: &MultiHopInstance) -> bool {
    answer
        .final_answer
        .as_deref()
        .is_some_and(|a| answer_matches(a, &instance.gold_new_answer, &instance.gold_new_aliases))
}

/// Final answer correct and every hop entity equal to the gold edited chain.
pub fn run_is_hop_correct(answer: &MultiHopAnswer, instance: &MultiHopInstance) -> bool {
    run_is_correct(answer, instance)
        && answer.hops.len() == instance.gold_hops.len()
        && answer
            .hops
            .iter()
            .zip(&instance.gold_hops)
            .all(|(h, g)| answer_matches(&h.extracted_entity, &g.answer, &g.aliases))
}

/// Per-instance verdicts: (any paraphrase correct, any paraphrase hop-correct).
fn verdicts<'a>(
    traces: &'a [TraceRecord],
    instances: &'a [MultiHopInstance],
) -> Result<Vec<(&'a MultiHopInstance, bool, bool)>, EvalError> {
    let by_id: BTreeMap<&str, &MultiHopInstance> =
        instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();
    let mut acc: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for t in traces {
        let inst = by_id
            .get(t.instance_id.as_str())
            .ok_or_else(|| EvalError::UnknownInstance(t.instance_id.clone()))?;
        let entry = acc.entry(inst.instance_id.as_str()).or_default();
        entry.0 |= run_is_correct(&t.answer, inst);
        entry.1 |= run_is_hop_correct(&t.answer, inst);
    }
    Ok(acc
        .into_iter()
        .map(|(id, (a, h))| (by_id[id], a, h))
        .collect())
}

pub fn multihop_accuracy(traces: &[TraceRecord], instances: &[MultiHopInstance]) -> Result<f64, EvalError> {
    let v = verdicts(traces, instances)?;
    Ok(ratio(v.iter().filter(|x| x.1).count(), v.len()))
}

pub fn hopwise_accuracy(traces: &[TraceRecord], instances: &[MultiHopInstance]) -> Result<f64, EvalError> {
    let v = verdicts(traces, instances)?;
    Ok(ratio(v.iter().filter(|x| x.2).count(), v.len()))
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub instances: usize,
    pub correct: usize,
    pub hop_correct: usize,
    pub multihop_accuracy: f64,
    pub hopwise_accuracy: f64,
}

impl Metrics {
    fn add(&mut self, correct: bool, hop_correct: bool) {
        self.instances += 1;
        self.correct += usize::from(correct);
        self.hop_correct += usize::from(hop_correct);
        self.multihop_accuracy = ratio(self.correct, self.instances);
        self.hopwise_accuracy = ratio(self.hop_correct, self.instances);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub memory_size_label: String,
    pub mode: Mode,
    pub memory_edits: usize,
    pub overall: Metrics,
    /// Keyed by the instance's edit languages, e.g. `xx1` or `en+xx1`.
    pub per_language: BTreeMap<String, Metrics>,
    /// Orchestration outcomes over all question paraphrases.
    pub outcomes: BTreeMap<String, usize>,
    pub injected_hops: usize,
    pub total_hops: usize,
}

/// Recomputes a report from persisted traces; a pure function of its inputs.
pub fn report_from_traces(
    traces: &[TraceRecord],
    instances: &[MultiHopInstance],
    memory_size_label: &str,
    mode: Mode,
    memory_edits: usize,
) -> Result<EvalReport, EvalError> {
    let mut overall = Metrics::default();
    let mut per_language: BTreeMap<String, Metrics> = BTreeMap::new();
    for (inst, a, h) in verdicts(traces, instances)? {
        overall.add(a, h);
        per_language.entry(inst.language_key()).or_default().add(a, h);
    }
    let mut outcomes = BTreeMap::new();
    for t in traces {
        let key = serde_json::to_value(t.answer.outcome)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        *outcomes.entry(key).or_insert(0) += 1;
    }
    Ok(EvalReport {
        memory_size_label: memory_size_label.to_string(),
        mode,
        memory_edits,
        overall,
        per_language,
        outcomes,
        injected_hops: traces.iter().map(|t| t.answer.injected_hops()).sum(),
        total_hops: traces.iter().map(|t| t.answer.hops.len()).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: EvalReport,
    pub traces: Vec<TraceRecord>,
    /// Instance ids evaluated, in dataset order.
    pub evaluated: Vec<String>,
}

/// Indices of the instances evaluated under `policy`, ascending.
pub fn select_instances(n: usize, policy: MemoryPolicy, seed: u64) -> Vec<usize> {
    match policy {
        MemoryPolicy::All => (0..n).collect(),
        MemoryPolicy::Sampled(k) if k >= n => (0..n).collect(),
        MemoryPolicy::Sampled(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample_indices(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
    }
}

/// Builds the memory from the selected instances' edits plus `extra_edits`
/// (e.g. distractors), then answers every paraphrase of every selected
/// instance. Instances run in parallel; results are kept in dataset order.
pub fn run_eval(
    instances: &[MultiHopInstance],
    extra_edits: &[FactEdit],
    policy: MemoryPolicy,
    encoder: &dyn Encoder,
    llm: &dyn LlmClient,
    config: &OrchestratorConfig,
    seed: u64,
) -> Result<EvalRun, EvalError> {
    config.validate()?;
    let selected: Vec<&MultiHopInstance> = select_instances(instances.len(), policy, seed)
        .into_iter()
        .map(|i| &instances[i])
        .collect();
    let edits: Vec<FactEdit> = selected
        .iter()
        .flat_map(|i| i.edits.iter().cloned())
        .chain(extra_edits.iter().cloned())
        .collect();
    let memory = build_memory(edits, encoder)?;
    tracing::info!(instances = selected.len(), edits = memory.len(), policy = %policy.label(), "evaluating");

    let per_instance: Vec<Vec<TraceRecord>> = selected
        .par_iter()
        .map(|inst| {
            inst.questions
                .iter()
                .enumerate()
                .map(|(qi, q)| {
                    Ok(TraceRecord {
                        instance_id: inst.instance_id.clone(),
                        question_index: qi,
                        answer: answer_multihop(q, &memory, encoder, llm, config)?,
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;
    let traces: Vec<TraceRecord> = per_instance.into_iter().flatten().collect();
    let evaluated: Vec<MultiHopInstance> = selected.iter().map(|i| (*i).clone()).collect();
    let report = report_from_traces(&traces, &evaluated, &policy.label(), config.mode, memory.len())?;
    Ok(EvalRun {
        report,
        traces,
        evaluated: evaluated.into_iter().map(|i| i.instance_id).collect(),
    })
}

pub fn write_traces_jsonl(path: impl AsRef<Path>, traces: &[TraceRecord]) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_traces_jsonl(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, EvalError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EvalError::Trace { line: i + 1, source })?);
    }
    Ok(out)
}

/// Plain-text table of the report, one row per language plus the overall row.
pub fn format_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode={} memory={} edits={} injected_hops={}/{}",
        report.mode, report.memory_size_label, report.memory_edits, report.injected_hops, report.total_hops
    );
    let _ = writeln!(out, "{:<16} {:>6} {:>8} {:>8}", "language", "n", "Acc", "Hop-Acc");
    let rows = report
        .per_language
        .iter()
        .map(|(k, m)| (k.as_str(), m))
        .chain(std::iter::once(("overall", &report.overall)));
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>8.1} {:>8.1}",
            name,
            m.instances,
            100.0 * m.multihop_accuracy,
            100.0 * m.hopwise_accuracy
        );
    }
    out
}
