//! Fact triples, edits, per-language statement templates and the edit memory.
//!
//! An edit `(s, r, o*)` is rendered to a natural-language statement through a
//! [`TemplateTable`] keyed by `(relation, language)`. The rendered statements are
//! embedded once into an [`EditMemory`], an exact brute-force index.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Encoder, EncoderError};

pub const SUBJECT_PLACEHOLDER: &str = "{subject}";
pub const OBJECT_PLACEHOLDER: &str = "{object}";

/// Tolerance on the L2 norm of every memory row.
pub const ROW_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FactError {
    #[error("fact triple field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("no template for relation `{relation}` in language `{language}`")]
    MissingTemplate { relation: String, language: String },
    #[error("template for `{relation}`/`{language}` must contain exactly one {{subject}} and one {{object}}: {template:?}")]
    BadTemplate {
        relation: String,
        language: String,
        template: String,
    },
    #[error("duplicate edit id `{0}`")]
    DuplicateEditId(String),
    #[error("edit `{edit_id}` statement does not match its rendered template")]
    StatementMismatch { edit_id: String },
    #[error("encoder failure: {0}")]
    Encoder(#[from] EncoderError),
    #[error("memory file is inconsistent: {0}")]
    CorruptMemory(String),
    #[error("line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl FactTriple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Result<Self, FactError> {
        let triple = Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        };
        triple.validate()?;
        Ok(triple)
    }

    pub fn validate(&self) -> Result<(), FactError> {
        if self.subject.trim().is_empty() {
            return Err(FactError::EmptyField("subject"));
        }
        if self.relation.trim().is_empty() {
            return Err(FactError::EmptyField("relation"));
        }
        if self.object.trim().is_empty() {
            return Err(FactError::EmptyField("object"));
        }
        Ok(())
    }
}

/// Map from `(relation, language)` to a statement template.
///
/// Serialized as `{relation: {language: template}}`. Lookups never fall back
/// to another language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, BTreeMap<String, String>>")]
#[serde(into = "BTreeMap<String, BTreeMap<String, String>>")]
pub struct TemplateTable {
    templates: BTreeMap<String, BTreeMap<String, String>>,
}

impl TemplateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        relation: impl Into<String>,
        language: impl Into<String>,
        template: impl Into<String>,
    ) -> Result<(), FactError> {
        let (relation, language, template) = (relation.into(), language.into(), template.into());
        check_template(&relation, &language, &template)?;
        self.templates
            .entry(relation)
            .or_default()
            .insert(language, template);
        Ok(())
    }

    pub fn get(&self, relation: &str, language: &str) -> Result<&str, FactError> {
        self.templates
            .get(relation)
            .and_then(|by_lang| by_lang.get(language))
            .map(String::as_str)
            .ok_or_else(|| FactError::MissingTemplate {
                relation: relation.to_string(),
                language: language.to_string(),
            })
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn languages(&self, relation: &str) -> impl Iterator<Item = &str> {
        self.templates
            .get(relation)
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FactError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FactError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl TryFrom<BTreeMap<String, BTreeMap<String, String>>> for TemplateTable {
    type Error = FactError;

    fn try_from(raw: BTreeMap<String, BTreeMap<String, String>>) -> Result<Self, Self::Error> {
        for (relation, by_lang) in &raw {
            for (language, template) in by_lang {
                check_template(relation, language, template)?;
            }
        }
        Ok(Self { templates: raw })
    }
}

impl From<TemplateTable> for BTreeMap<String, BTreeMap<String, String>> {
    fn from(table: TemplateTable) -> Self {
        table.templates
    }
}

fn check_template(relation: &str, language: &str, template: &str) -> Result<(), FactError> {
    if template.matches(SUBJECT_PLACEHOLDER).count() != 1
        || template.matches(OBJECT_PLACEHOLDER).count() != 1
    {
        return Err(FactError::BadTemplate {
            relation: relation.to_string(),
            language: language.to_string(),
            template: template.to_string(),
        });
    }
    Ok(())
}

/// Fills a single-placeholder template in one pass, so entity text that happens
/// to contain `{object}` is never substituted a second time.
fn fill_template(template: &str, subject: &str, object: &str) -> String {
    let s_at = template.find(SUBJECT_PLACEHOLDER).expect("validated template");
    let o_at = template.find(OBJECT_PLACEHOLDER).expect("validated template");
    let mut out = String::with_capacity(template.len() + subject.len() + object.len());
    let (first_at, first_len, first, second_at, second_len, second) = if s_at < o_at {
        (s_at, SUBJECT_PLACEHOLDER.len(), subject, o_at, OBJECT_PLACEHOLDER.len(), object)
    } else {
        (o_at, OBJECT_PLACEHOLDER.len(), object, s_at, SUBJECT_PLACEHOLDER.len(), subject)
    };
    out.push_str(&template[..first_at]);
    out.push_str(first);
    out.push_str(&template[first_at + first_len..second_at]);
    out.push_str(second);
    out.push_str(&template[second_at + second_len..]);
    out
}

pub fn render_statement(
    triple: &FactTriple,
    language: &str,
    templates: &TemplateTable,
) -> Result<String, FactError> {
    let template = templates.get(&triple.relation, language)?;
    Ok(fill_template(template, &triple.subject, &triple.object))
}

/// A knowledge edit `(s, r, o*)` together with its statement in one language.
///
/// The object field of `triple` holds the new object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactEdit {
    edit_id: String,
    triple: FactTriple,
    language: String,
    statement: String,
}

impl FactEdit {
    pub fn new(
        edit_id: impl Into<String>,
        triple: FactTriple,
        language: impl Into<String>,
        templates: &TemplateTable,
    ) -> Result<Self, FactError> {
        triple.validate()?;
        let language = language.into();
        let statement = render_statement(&triple, &language, templates)?;
        Ok(Self {
            edit_id: edit_id.into(),
            triple,
            language,
            statement,
        })
    }

    /// Re-renders the statement and checks it against the stored text.
    pub fn check(&self, templates: &TemplateTable) -> Result<(), FactError> {
        self.triple.validate()?;
        if render_statement(&self.triple, &self.language, templates)? != self.statement {
            return Err(FactError::StatementMismatch {
                edit_id: self.edit_id.clone(),
            });
        }
        Ok(())
    }

    pub fn edit_id(&self) -> &str {
        &self.edit_id
    }

    pub fn triple(&self) -> &FactTriple {
        &self.triple
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn statement(&self) -> &str {
        &self.statement
    }

    pub fn to_record(&self) -> EditRecord {
        EditRecord {
            edit_id: self.edit_id.clone(),
            subject: self.triple.subject.clone(),
            relation: self.triple.relation.clone(),
            object_new: self.triple.object.clone(),
            language: self.language.clone(),
        }
    }
}

/// One line of the edit JSONL input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRecord {
    pub edit_id: String,
    pub subject: String,
    pub relation: String,
    pub object_new: String,
    pub language: String,
}

impl EditRecord {
    pub fn into_edit(self, templates: &TemplateTable) -> Result<FactEdit, FactError> {
        let triple = FactTriple::new(self.subject, self.relation, self.object_new)?;
        FactEdit::new(self.edit_id, triple, self.language, templates)
    }
}

pub fn read_edits_jsonl(
    path: impl AsRef<Path>,
    templates: &TemplateTable,
) -> Result<Vec<FactEdit>, FactError> {
    let file = std::fs::File::open(path)?;
    let mut edits = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EditRecord = serde_json::from_str(&line)
            .map_err(|source| FactError::Jsonl { line: i + 1, source })?;
        edits.push(record.into_edit(templates)?);
    }
    Ok(edits)
}

pub fn write_edits_jsonl(path: impl AsRef<Path>, edits: &[FactEdit]) -> Result<(), FactError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for edit in edits {
        serde_json::to_writer(&mut out, &edit.to_record())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Immutable store of edits and their unit-norm embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EditMemory {
    edits: Vec<FactEdit>,
    dim: usize,
    /// Row-major, `edits.len() * dim`.
    embeddings: Vec<f64>,
    encoder_fingerprint: String,
}

pub fn build_memory(edits: Vec<FactEdit>, encoder: &dyn Encoder) -> Result<EditMemory, FactError> {
    let mut seen = HashSet::with_capacity(edits.len());
    for edit in &edits {
        if !seen.insert(edit.edit_id.as_str()) {
            return Err(FactError::DuplicateEditId(edit.edit_id.clone()));
        }
    }
    let dim = encoder.dim();
    let texts: Vec<&str> = edits.iter().map(|e| e.statement.as_str()).collect();
    let vectors = encoder.embed_batch(&texts)?;
    let mut embeddings = Vec::with_capacity(edits.len() * dim);
    for v in vectors {
        let v = v.into_normalized()?;
        if v.dim() != dim {
            return Err(EncoderError::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            }
            .into());
        }
        embeddings.extend_from_slice(v.values());
    }
    Ok(EditMemory {
        edits,
        dim,
        embeddings,
        encoder_fingerprint: encoder.fingerprint().to_string(),
    })
}

impl EditMemory {
    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edits(&self) -> &[FactEdit] {
        &self.edits
    }

    pub fn edit(&self, i: usize) -> &FactEdit {
        &self.edits[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and an empty memory has no rows anyway
        self.embeddings.chunks_exact(self.dim.max(1))
    }

    pub fn encoder_fingerprint(&self) -> &str {
        &self.encoder_fingerprint
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FactError> {
        let file = MemoryFile {
            encoder_fingerprint: self.encoder_fingerprint.clone(),
            dim: self.dim,
            edits: self.edits.clone(),
            embeddings: self.rows().map(<[f64]>::to_vec).collect(),
        };
        let out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(out, &file)?;
        Ok(())
    }

    /// Loads a saved memory, re-checking every statement against `templates`
    /// and every row norm.
    pub fn load(path: impl AsRef<Path>, templates: &TemplateTable) -> Result<Self, FactError> {
        let file: MemoryFile =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if file.embeddings.len() != file.edits.len() {
            return Err(FactError::CorruptMemory(format!(
                "{} rows for {} edits",
                file.embeddings.len(),
                file.edits.len()
            )));
        }
        let mut seen = HashSet::new();
        let mut embeddings = Vec::with_capacity(file.edits.len() * file.dim);
        for (edit, row) in file.edits.iter().zip(&file.embeddings) {
            edit.check(templates)?;
            if !seen.insert(edit.edit_id.as_str()) {
                return Err(FactError::DuplicateEditId(edit.edit_id.clone()));
            }
            if row.len() != file.dim {
                return Err(FactError::CorruptMemory(format!(
                    "row for `{}` has dimension {}",
                    edit.edit_id,
                    row.len()
                )));
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > ROW_NORM_TOLERANCE {
                return Err(FactError::CorruptMemory(format!(
                    "row for `{}` has norm {norm}",
                    edit.edit_id
                )));
            }
            embeddings.extend_from_slice(row);
        }
        Ok(Self {
            edits: file.edits,
            dim: file.dim,
            embeddings,
            encoder_fingerprint: file.encoder_fingerprint,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MemoryFile {
    encoder_fingerprint: String,
    dim: usize,
    edits: Vec<FactEdit>,
    embeddings: Vec<Vec<f64>>,
}
