//! MQuAKE-style dataset files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::fact_store::{FactEdit, FactTriple, TemplateTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerText {
    pub str: String,
}

/// One requested rewrite `(subject, relation_id, target_new)` with its language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub subject: String,
    pub relation_id: String,
    pub target_new: AnswerText,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_true: Option<AnswerText>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleHopRecord {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub answer_alias: Vec<String>,
}

/// Wire form of one dataset item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub case_id: String,
    pub questions: Vec<String>,
    pub requested_rewrite: Vec<RewriteRecord>,
    pub new_answer: String,
    #[serde(default)]
    pub new_answer_alias: Vec<String>,
    pub new_single_hops: Vec<SingleHopRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldHop {
    pub subquestion: String,
    pub answer: String,
    pub aliases: Vec<String>,
}

/// A multi-hop question with its edits and the gold edited chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiHopInstance {
    pub instance_id: String,
    pub questions: Vec<String>,
    pub edits: Vec<FactEdit>,
    pub gold_new_answer: String,
    pub gold_new_aliases: Vec<String>,
    pub gold_hops: Vec<GoldHop>,
    pub hop_count: usize,
    original_objects: Vec<Option<String>>,
}

impl MultiHopInstance {
    pub fn from_record(record: InstanceRecord, templates: &TemplateTable) -> Result<Self, EvalError> {
        let mut edits = Vec::new();
        let mut original_objects = Vec::new();
        for (k, rw) in record.requested_rewrite.into_iter().enumerate() {
            let triple = FactTriple::new(rw.subject, rw.relation_id, rw.target_new.str)?;
            edits.push(FactEdit::new(
                format!("{}/{k}", record.case_id),
                triple,
                rw.language,
                templates,
            )?);
            original_objects.push(rw.target_true.map(|t| t.str));
        }
        Ok(Self {
            instance_id: record.case_id,
            questions: record.questions,
            edits,
            gold_new_answer: record.new_answer,
            gold_new_aliases: record.new_answer_alias,
            hop_count: record.new_single_hops.len(),
            gold_hops: record
                .new_single_hops
                .into_iter()
                .map(|h| GoldHop {
                    subquestion: h.question,
                    answer: h.answer,
                    aliases: h.answer_alias,
                })
                .collect(),
            original_objects,
        })
    }

    pub fn to_record(&self) -> InstanceRecord {
        InstanceRecord {
            case_id: self.instance_id.clone(),
            questions: self.questions.clone(),
            requested_rewrite: self
                .edits
                .iter()
                .zip(&self.original_objects)
                .map(|(e, orig)| RewriteRecord {
                    subject: e.triple().subject.clone(),
                    relation_id: e.triple().relation.clone(),
                    target_new: AnswerText {
                        str: e.triple().object.clone(),
                    },
                    target_true: orig.clone().map(|str| AnswerText { str }),
                    language: e.language().to_string(),
                })
                .collect(),
            new_answer: self.gold_new_answer.clone(),
            new_answer_alias: self.gold_new_aliases.clone(),
            new_single_hops: self
                .gold_hops
                .iter()
                .map(|h| SingleHopRecord {
                    question: h.subquestion.clone(),
                    answer: h.answer.clone(),
                    answer_alias: h.aliases.clone(),
                })
                .collect(),
        }
    }

    /// Sorted, de-duplicated edit languages joined with `+`.
    pub fn language_key(&self) -> String {
        let mut langs: Vec<&str> = self.edits.iter().map(FactEdit::language).collect();
        langs.sort_unstable();
        langs.dedup();
        langs.join("+")
    }
}

/// Structural validation that runs before deserialization so errors carry a location.
struct Walker;

fn schema(pointer: String, message: impl Into<String>) -> EvalError {
    EvalError::Schema {
        pointer,
        message: message.into(),
    }
}

impl Walker {
    fn field<'v>(&self, obj: &'v Value, at: &str, key: &str) -> Result<&'v Value, EvalError> {
        obj.get(key)
            .ok_or_else(|| schema(format!("{at}/{key}"), format!("missing field `{key}`")))
    }

    fn string(&self, obj: &Value, at: &str, key: &str) -> Result<(), EvalError> {
        match self.field(obj, at, key)? {
            Value::String(s) if !s.trim().is_empty() => Ok(()),
            Value::String(_) => Err(schema(format!("{at}/{key}"), "must not be empty")),
            _ => Err(schema(format!("{at}/{key}"), "expected a string")),
        }
    }

    fn string_array(&self, v: &Value, at: &str, required: bool) -> Result<(), EvalError> {
        let Some(items) = v.as_array() else {
            return Err(schema(at.to_string(), "expected an array of strings"));
        };
        if required && items.is_empty() {
            return Err(schema(at.to_string(), "must not be empty"));
        }
        for (i, item) in items.iter().enumerate() {
            if !item.is_string() {
                return Err(schema(format!("{at}/{i}"), "expected a string"));
            }
        }
        Ok(())
    }

    fn answer_text(&self, obj: &Value, at: &str, key: &str) -> Result<(), EvalError> {
        let v = self.field(obj, at, key)?;
        if !v.is_object() {
            return Err(schema(format!("{at}/{key}"), "expected an object with `str`"));
        }
        self.string(v, &format!("{at}/{key}"), "str")
    }

    fn instance(&self, item: &Value, at: &str) -> Result<(), EvalError> {
        if !item.is_object() {
            return Err(schema(at.to_string(), "expected an object"));
        }
        match self.field(item, at, "case_id")? {
            Value::String(_) | Value::Number(_) => {}
            _ => return Err(schema(format!("{at}/case_id"), "expected a string or number")),
        }
        let questions = self.field(item, at, "questions")?;
        self.string_array(questions, &format!("{at}/questions"), true)?;

        let rewrites = self.field(item, at, "requested_rewrite")?;
        let Some(rewrites) = rewrites.as_array().filter(|r| !r.is_empty()) else {
            return Err(schema(format!("{at}/requested_rewrite"), "expected a non-empty array"));
        };
        for (k, rw) in rewrites.iter().enumerate() {
            let p = format!("{at}/requested_rewrite/{k}");
            if !rw.is_object() {
                return Err(schema(p, "expected an object"));
            }
            self.string(rw, &p, "subject")?;
            self.string(rw, &p, "relation_id")?;
            self.answer_text(rw, &p, "target_new")?;
            if rw.get("target_true").is_some() {
                self.answer_text(rw, &p, "target_true")?;
            }
            self.string(rw, &p, "language")?;
        }

        self.string(item, at, "new_answer")?;
        if let Some(aliases) = item.get("new_answer_alias") {
            self.string_array(aliases, &format!("{at}/new_answer_alias"), false)?;
        }
        let hops = self.field(item, at, "new_single_hops")?;
        let Some(hops) = hops.as_array() else {
            return Err(schema(format!("{at}/new_single_hops"), "expected an array"));
        };
        if !(2..=4).contains(&hops.len()) {
            return Err(schema(
                format!("{at}/new_single_hops"),
                format!("expected 2 to 4 hops, found {}", hops.len()),
            ));
        }
        for (h, hop) in hops.iter().enumerate() {
            let p = format!("{at}/new_single_hops/{h}");
            if !hop.is_object() {
                return Err(schema(p, "expected an object"));
            }
            self.string(hop, &p, "question")?;
            self.string(hop, &p, "answer")?;
            if let Some(aliases) = hop.get("answer_alias") {
                self.string_array(aliases, &format!("{p}/answer_alias"), false)?;
            }
        }
        Ok(())
    }
}

fn normalize_case_id(item: &mut Value) {
    if let Some(id) = item.get_mut("case_id") {
        if let Value::Number(n) = id {
            *id = Value::String(n.to_string());
        }
    }
}

/// Parses and validates a dataset. The first violation is reported with its
/// JSON-pointer path.
pub fn parse_dataset(text: &str, templates: &TemplateTable) -> Result<Vec<MultiHopInstance>, EvalError> {
    let mut root: Value = serde_json::from_str(text)?;
    let Some(items) = root.as_array_mut() else {
        return Err(schema(String::new(), "expected a JSON array of instances"));
    };
    for (i, item) in items.iter().enumerate() {
        Walker.instance(item, &format!("/{i}"))?;
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter_mut().enumerate() {
        normalize_case_id(item);
        let record: InstanceRecord = serde_json::from_value(item.clone())?;
        if !seen.insert(record.case_id.clone()) {
            return Err(schema(format!("/{i}/case_id"), "duplicate case_id"));
        }
        let instance = MultiHopInstance::from_record(record, templates).map_err(|e| match e {
            EvalError::Fact(f) => schema(format!("/{i}/requested_rewrite"), f.to_string()),
            other => other,
        })?;
        out.push(instance);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, templates: &TemplateTable) -> Result<Vec<MultiHopInstance>, EvalError> {
    parse_dataset(&std::fs::read_to_string(path)?, templates)
}

pub fn dataset_to_string(instances: &[MultiHopInstance]) -> Result<String, EvalError> {
    let records: Vec<InstanceRecord> = instances.iter().map(MultiHopInstance::to_record).collect();
    let mut text = serde_json::to_string_pretty(&records)?;
    text.push('\n');
    Ok(text)
}

pub fn save_dataset(path: impl AsRef<Path>, instances: &[MultiHopInstance]) -> Result<(), EvalError> {
    std::fs::write(path, dataset_to_string(instances)?)?;
    Ok(())
}
