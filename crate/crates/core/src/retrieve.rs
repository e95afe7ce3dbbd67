//! Top-1 retrieval over an [`EditMemory`] and threshold verification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{dot, Encoder, EncoderError};
use crate::fact_store::{EditMemory, FactEdit};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("memory was built with encoder {memory}, query encoder is {encoder}")]
    FingerprintMismatch { memory: String, encoder: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Best-scoring edit for a query and whether it passed verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub edit_index: usize,
    pub edit: FactEdit,
    pub score: f64,
    pub verified: bool,
    pub threshold_used: f64,
}

/// `score >= t`; the boundary counts as verified.
pub fn verify(result: &RetrievalResult, t: f64) -> bool {
    result.score >= t
}

pub fn check_fingerprint(memory: &EditMemory, encoder: &dyn Encoder) -> Result<(), RetrieveError> {
    if memory.encoder_fingerprint() != encoder.fingerprint() {
        return Err(RetrieveError::FingerprintMismatch {
            memory: memory.encoder_fingerprint().to_string(),
            encoder: encoder.fingerprint().to_string(),
        });
    }
    Ok(())
}

/// Index and cosine of the best row; ties go to the lowest index.
pub fn top1_index(query: &[f64], memory: &EditMemory) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in memory.rows().enumerate() {
        let score = dot(query, row);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best
}

/// Embeds `query` and returns the highest-cosine edit, or `None` when the
/// memory is empty.
pub fn retrieve_top1(
    query: &str,
    memory: &EditMemory,
    encoder: &dyn Encoder,
    threshold: f64,
) -> Result<Option<RetrievalResult>, RetrieveError> {
    check_fingerprint(memory, encoder)?;
    if memory.is_empty() {
        return Ok(None);
    }
    let q = encoder.embed_text(query)?.into_normalized()?;
    if q.dim() != memory.dim() {
        return Err(EncoderError::DimensionMismatch {
            expected: memory.dim(),
            actual: q.dim(),
        }
        .into());
    }
    let Some((edit_index, score)) = top1_index(q.values(), memory) else {
        return Ok(None);
    };
    let score = score.clamp(-1.0, 1.0);
    Ok(Some(RetrievalResult {
        edit_index,
        edit: memory.edit(edit_index).clone(),
        score,
        verified: score >= threshold,
        threshold_used: threshold,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{BuiltinEncoder, BuiltinEncoderParams};
    use crate::fact_store::{build_memory, FactTriple, TemplateTable};

    fn setup() -> (TemplateTable, BuiltinEncoder) {
        let mut t = TemplateTable::new();
        t.insert("capital", "en", "The capital of {subject} is {object}.")
            .unwrap();
        (t, BuiltinEncoder::new(BuiltinEncoderParams::init(32, 1 << 12, 5)))
    }

    fn result_with(score: f64, t: &TemplateTable) -> RetrievalResult {
        RetrievalResult {
            edit_index: 0,
            edit: FactEdit::new("e", FactTriple::new("A", "capital", "B").unwrap(), "en", t)
                .unwrap(),
            score,
            verified: false,
            threshold_used: 0.7,
        }
    }

    #[test]
    fn verify_boundary_is_inclusive() {
        let (t, _) = setup();
        assert!(verify(&result_with(0.71, &t), 0.7));
        assert!(verify(&result_with(0.7, &t), 0.7));
        assert!(!verify(&result_with(0.69, &t), 0.7));
    }

    #[test]
    fn self_retrieval_and_empty_memory() {
        let (t, enc) = setup();
        let edits: Vec<_> = ["Velland", "Orsk", "Mirra"]
            .iter()
            .enumerate()
            .map(|(i, s)| {
                FactEdit::new(
                    format!("e{i}"),
                    FactTriple::new(*s, "capital", "Zorb").unwrap(),
                    "en",
                    &t,
                )
                .unwrap()
            })
            .collect();
        let memory = build_memory(edits, &enc).unwrap();
        let hit = retrieve_top1(memory.edit(1).statement(), &memory, &enc, 0.7)
            .unwrap()
            .unwrap();
        assert_eq!(hit.edit_index, 1);
        assert!((hit.score - 1.0).abs() < 1e-6);
        assert!(hit.verified);

        let empty = build_memory(Vec::new(), &enc).unwrap();
        assert!(retrieve_top1("anything", &empty, &enc, 0.7).unwrap().is_none());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let (t, enc) = setup();
        let edit = |id: &str| {
            FactEdit::new(id, FactTriple::new("A", "capital", "B").unwrap(), "en", &t).unwrap()
        };
        let memory = build_memory(vec![edit("first"), edit("second")], &enc).unwrap();
        let hit = retrieve_top1("capital of A", &memory, &enc, 0.0).unwrap().unwrap();
        assert_eq!(hit.edit.edit_id(), "first");
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let (t, enc) = setup();
        let other = BuiltinEncoder::new(BuiltinEncoderParams::init(32, 1 << 12, 6));
        let memory = build_memory(
            vec![FactEdit::new("e", FactTriple::new("A", "capital", "B").unwrap(), "en", &t)
                .unwrap()],
            &enc,
        )
        .unwrap();
        assert!(matches!(
            retrieve_top1("q", &memory, &other, 0.7),
            Err(RetrieveError::FingerprintMismatch { .. })
        ));
    }
}
