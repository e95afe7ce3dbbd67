//! Training examples, their JSONL encoding, and the training configuration.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Distance, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletKind {
    /// Translations of one edit vs. an entity-swapped corruption in the anchor's language.
    Sd,
    /// English question vs. its answering edit and an unrelated edit.
    Clec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletExample {
    pub kind: TripletKind,
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Positive,
    Negative,
}

/// A question and an edit statement. Files only carry positive pairs; the
/// negatives are other questions drawn from the same mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BcePair {
    pub question: String,
    pub edit_statement: String,
    pub label: PairLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainingSample {
    Triplet(TripletExample),
    Bce(BcePair),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum SampleRecord {
    Sd {
        anchor: String,
        positive: String,
        negative: String,
    },
    Clec {
        anchor: String,
        positive: String,
        negative: String,
    },
    Bce {
        question: String,
        edit: String,
    },
}

impl From<SampleRecord> for TrainingSample {
    fn from(r: SampleRecord) -> Self {
        let triplet = |kind, anchor, positive, negative| {
            TrainingSample::Triplet(TripletExample {
                kind,
                anchor,
                positive,
                negative,
            })
        };
        match r {
            SampleRecord::Sd {
                anchor,
                positive,
                negative,
            } => triplet(TripletKind::Sd, anchor, positive, negative),
            SampleRecord::Clec {
                anchor,
                positive,
                negative,
            } => triplet(TripletKind::Clec, anchor, positive, negative),
            SampleRecord::Bce { question, edit } => TrainingSample::Bce(BcePair {
                question,
                edit_statement: edit,
                label: PairLabel::Positive,
            }),
        }
    }
}

impl TrainingSample {
    fn to_record(&self) -> Option<SampleRecord> {
        Some(match self {
            TrainingSample::Triplet(t) => match t.kind {
                TripletKind::Sd => SampleRecord::Sd {
                    anchor: t.anchor.clone(),
                    positive: t.positive.clone(),
                    negative: t.negative.clone(),
                },
                TripletKind::Clec => SampleRecord::Clec {
                    anchor: t.anchor.clone(),
                    positive: t.positive.clone(),
                    negative: t.negative.clone(),
                },
            },
            TrainingSample::Bce(p) if p.label == PairLabel::Positive => SampleRecord::Bce {
                question: p.question.clone(),
                edit: p.edit_statement.clone(),
            },
            TrainingSample::Bce(_) => return None,
        })
    }
}

pub fn read_samples_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>, TrainError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line)
            .map_err(|source| TrainError::Jsonl { line: i + 1, source })?;
        out.push(record.into());
    }
    Ok(out)
}

/// Writes samples as JSONL. Explicit negative pairs have no file encoding and are skipped.
pub fn write_samples_jsonl(
    path: impl AsRef<Path>,
    samples: &[TrainingSample],
) -> Result<(), TrainError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in samples.iter().filter_map(TrainingSample::to_record) {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Weights on the (semantic distinction, cross-lingual consistency, BCE) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub sd: f64,
    pub clec: f64,
    pub bce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sd: 1.0,
            clec: 1.0,
            bce: 1.0,
        }
    }
}

impl LossWeights {
    pub fn only(sd: bool, clec: bool, bce: bool) -> Self {
        let w = |on| if on { 1.0 } else { 0.0 };
        Self {
            sd: w(sd),
            clec: w(clec),
            bce: w(bce),
        }
    }

    /// Weighted sum of the three per-term means.
    pub fn combine(&self, sd: f64, clec: f64, bce: f64) -> f64 {
        self.sd * sd + self.clec * clec + self.bce * bce
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub distance: Distance,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub validation_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 1024,
            epochs: 200,
            margin: 1.0,
            negatives_per_positive: 20,
            distance: Distance::L2,
            seed: 0,
            loss_weights: LossWeights::default(),
            validation_fraction: 0.2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad("margin must be > 0");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        let w = self.loss_weights;
        if [w.sd, w.clec, w.bce].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("loss weights must be finite and >= 0");
        }
        if w.sd + w.clec + w.bce == 0.0 {
            return bad("at least one loss weight must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || self.adam_epsilon <= 0.0
        {
            return bad("adam betas must be in [0, 1) and epsilon > 0");
        }
        Ok(())
    }
}
