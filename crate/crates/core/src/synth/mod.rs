//! Deterministic synthetic corpora: a functional knowledge graph with fact
//! chains, pseudo-languages, edited multi-hop instances with distractor edits,
//! scripted LLM transcripts and retriever training data.

mod instances;
mod language;
mod training_data;
mod world;

pub use instances::{gen_instances, InstanceOptions, LanguagePolicy, SynthCorpus};
pub use language::PseudoLanguage;
pub use training_data::{entity_pool, gen_training_data, TrainingDataOptions, TrainingSet};
pub use world::{gen_world, relation_catalog, Chain, HopMix, RelationSpec, SynthWorld};

use thiserror::Error;

use crate::fact_store::{FactError, TemplateTable};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("word `{0}` is not in the pseudo-language lexicon")]
    UnknownWord(String),
    #[error("invalid synth option: {0}")]
    InvalidOption(String),
    #[error("generation exhausted its attempts: {0}")]
    Exhausted(String),
    #[error(transparent)]
    Fact(#[from] FactError),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
}

/// Every word used by the English statement templates.
pub fn template_vocabulary(relations: &[RelationSpec]) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for r in relations {
        for token in r.template.split_whitespace() {
            let core = token.trim_matches(|c: char| c.is_ascii_punctuation());
            if !core.is_empty() && !r.template.contains(&format!("{{{core}}}")) {
                words.push(core.to_string());
            }
        }
    }
    words.sort();
    words.dedup();
    words
}

/// Pseudo-languages `tags` over the catalog vocabulary, all derived from `seed`.
pub fn pseudo_languages(relations: &[RelationSpec], tags: &[String], seed: u64) -> Vec<PseudoLanguage> {
    let vocab = template_vocabulary(relations);
    tags.iter()
        .map(|t| PseudoLanguage::new(t, vocab.iter().map(String::as_str), seed))
        .collect()
}

/// English templates plus their translation into each pseudo-language.
pub fn build_templates(relations: &[RelationSpec], languages: &[PseudoLanguage]) -> Result<TemplateTable, SynthError> {
    let mut table = TemplateTable::new();
    for r in relations {
        table.insert(&r.id, "en", &r.template)?;
        for lang in languages {
            table.insert(&r.id, &lang.tag, lang.translate(&r.template)?)?;
        }
    }
    Ok(table)
}
